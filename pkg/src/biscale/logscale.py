"""Logscale diagram container shared by the wavelet, leader and estimation code."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LOG2_SD = "log2_Sd"
CUMULANT_KINDS = ("C_1", "C_2", "C_3")


def sl_kind(q: float) -> str:
    """Kind tag of the leader structure function of order ``q``."""
    return f"log2_SL({float(q):g})"


def parse_sl_kind(kind: str) -> Optional[float]:
    if kind.startswith("log2_SL(") and kind.endswith(")"):
        return float(kind[len("log2_SL("):-1])
    return None


def is_valid_kind(kind: str) -> bool:
    return kind == LOG2_SD or kind in CUMULANT_KINDS or parse_sl_kind(kind) is not None


@dataclass(frozen=True)
class LogscaleDiagram:
    """Per-octave statistic with its variance and coefficient count.

    ``j``, ``value``, ``variance`` and ``n_j`` are aligned 1-D arrays with
    strictly increasing octaves.
    """

    kind: str
    j: np.ndarray
    value: np.ndarray
    variance: np.ndarray
    n_j: np.ndarray
    delta0: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not is_valid_kind(self.kind):
            raise ValueError(f"unknown LD kind {self.kind!r}")
        j = np.asarray(self.j, dtype=int)
        arrays = {
            "j": j,
            "value": np.asarray(self.value, dtype=float),
            "variance": np.asarray(self.variance, dtype=float),
            "n_j": np.asarray(self.n_j, dtype=float),
        }
        lengths = {a.shape for a in arrays.values()}
        if len(lengths) != 1 or j.ndim != 1:
            raise ValueError("LD arrays must be 1-D and equally long")
        if j.size > 1 and np.any(np.diff(j) <= 0):
            raise ValueError("LD octaves must be strictly increasing")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.j.size

    @property
    def octaves(self) -> list[int]:
        return [int(v) for v in self.j]

    def at(self, j: int) -> float:
        idx = np.flatnonzero(self.j == j)
        if idx.size == 0:
            raise KeyError(j)
        return float(self.value[idx[0]])

    def select(self, j1: int, j2: int) -> "LogscaleDiagram":
        mask = (self.j >= j1) & (self.j <= j2)
        return self.replace(j=self.j[mask], value=self.value[mask],
                            variance=self.variance[mask], n_j=self.n_j[mask])

    def replace(self, **changes) -> "LogscaleDiagram":
        fields = dict(kind=self.kind, j=self.j, value=self.value, variance=self.variance,
                      n_j=self.n_j, delta0=self.delta0, provenance=dict(self.provenance))
        fields.update(changes)
        return LogscaleDiagram(**fields)

    def shifted(self, offset: float) -> "LogscaleDiagram":
        return self.replace(value=self.value + offset)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "delta0": float(self.delta0),
            "provenance": dict(self.provenance),
            "octaves": [
                {"j": int(j), "n_j": _num(n), "value": float(v), "variance": float(s)}
                for j, n, v, s in zip(self.j, self.n_j, self.value, self.variance)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogscaleDiagram":
        octs = d["octaves"]
        return cls(
            kind=d["kind"],
            j=[o["j"] for o in octs],
            value=[o["value"] for o in octs],
            variance=[o["variance"] for o in octs],
            n_j=[o["n_j"] for o in octs],
            delta0=d.get("delta0", 1.0),
            provenance=dict(d.get("provenance", {})),
        )


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else x
