"""Wavelet leaders, leader structure functions and log-leader cumulants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllLeadersZero, TooFewOctaves
from .logscale import CUMULANT_KINDS, LogscaleDiagram, sl_kind
from .wavelet import N_MIN, WaveletPyramid

# Count series have negative uniform regularity (fGn-like bins scale as
# 2^{j(H-1)}), so leaders are built on the once-integrated process by default.
DEFAULT_GAMMA = 1.0

# Nominal per-coefficient variances used as regression weights (~ 1/n_j);
# bootstrap replaces them when requested.
_NOMINAL_VARIANCE = {"C_1": 1.0, "C_2": 2.0, "C_3": 6.0}
_SL_NOMINAL_VARIANCE = 2.0 / np.log(2.0) ** 2


@dataclass(frozen=True)
class LeaderPyramid:
    octaves: dict
    j_min_valid: int
    gamma: float
    source: WaveletPyramid

    @property
    def js(self) -> list[int]:
        return sorted(self.octaves)

    def __getitem__(self, j):
        return self.octaves[j]

    @property
    def delta0(self):
        return self.source.delta0


def scaled_magnitudes(pyramid: WaveletPyramid, gamma: float = DEFAULT_GAMMA) -> dict:
    """``2^{gamma j} |d_X(j, k)|`` per octave."""
    return {j: np.abs(pyramid[j]) * 2.0 ** (gamma * j) for j in pyramid.js}


def compute_leaders(pyramid: WaveletPyramid, gamma: float = DEFAULT_GAMMA) -> LeaderPyramid:
    """Bottom-up leaders: sup over the 3-interval neighbourhood and all finer octaves.

    A running "local sup" per octave covers every dyadic interval, including
    those whose own coefficient at that octave was dropped at the boundary,
    so leaders near the edges still see all finer coefficients inside their
    clipped neighbourhood.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    js = pyramid.js
    if len(js) < 2:
        raise TooFewOctaves(f"need at least 2 octaves, pyramid has {len(js)}")
    if js != list(range(js[0], js[-1] + 1)):
        raise TooFewOctaves("pyramid octaves must be contiguous")
    mags = scaled_magnitudes(pyramid, gamma)

    leaders = {}
    local = None
    for j in js:
        a = mags[j]
        if local is None:
            local = a.copy()
        else:
            if local.size % 2:
                local = np.append(local, 0.0)
            children = local.reshape(-1, 2).max(axis=1)
            size = max(a.size, children.size)
            local = np.zeros(size)
            local[:children.size] = children
            local[:a.size] = np.maximum(local[:a.size], a)
        n = a.size
        lead = local[:n].copy()
        if n > 1:
            np.maximum(lead[1:], local[:n - 1], out=lead[1:])
        right = local[1:n + 1]
        np.maximum(lead[:right.size], right, out=lead[:right.size])
        lead.setflags(write=False)
        leaders[j] = lead
    return LeaderPyramid(octaves=leaders, j_min_valid=js[0] + 2, gamma=float(gamma),
                         source=pyramid)


def _positive(lp: LeaderPyramid, j: int):
    lead = lp[j]
    pos = lead[lead > 0]
    if pos.size == 0:
        raise AllLeadersZero(f"all leaders are zero at octave {j}")
    return pos, lead.size - pos.size


def leader_structure_fn(lp: LeaderPyramid, q: float, n_min: int = N_MIN) -> LogscaleDiagram:
    """``log2 (1/n_j) sum_k L(j,k)^q`` per octave (zero leaders excluded)."""
    js, vals, ns = [], [], []
    zeros = {}
    for j in lp.js:
        if lp[j].size < n_min:
            continue
        pos, nz = _positive(lp, j)
        if nz:
            zeros[int(j)] = int(nz)
        js.append(j)
        vals.append(0.0 if q == 0 else float(np.log2(np.mean(pos ** q))))
        ns.append(pos.size)
    ns = np.asarray(ns, dtype=float)
    return LogscaleDiagram(
        kind=sl_kind(q), j=js, value=vals, variance=_SL_NOMINAL_VARIANCE / ns, n_j=ns,
        delta0=lp.delta0,
        provenance={"label": lp.source.label, "zero_leaders": zeros, "gamma": lp.gamma},
    )


def cumulant_stats(x, p_max: int = 3) -> list[float]:
    """Unbiased sample mean, variance and third k-statistic of ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    m = x.mean()
    out = [float(m)]
    if p_max >= 2:
        dev = x - m
        out.append(float(np.sum(dev ** 2) / (n - 1)) if n > 1 else 0.0)
        if p_max >= 3:
            out.append(float(n * np.sum(dev ** 3) / ((n - 1) * (n - 2))) if n > 2 else 0.0)
    return out


def cumulants(lp: LeaderPyramid, p_max: int = 2, n_min: int = N_MIN) -> list[LogscaleDiagram]:
    """Log-leader cumulants ``C_p(j)`` for ``p = 1..p_max``."""
    if p_max not in (1, 2, 3):
        raise ValueError("p_max must be 1, 2 or 3")
    js, rows, ns = [], [], []
    for j in lp.js:
        if lp[j].size < n_min:
            continue
        pos, _ = _positive(lp, j)
        js.append(j)
        rows.append(cumulant_stats(np.log(pos), p_max))
        ns.append(pos.size)
    rows = np.asarray(rows, dtype=float).reshape(len(js), p_max)
    ns = np.asarray(ns, dtype=float)
    out = []
    for p in range(1, p_max + 1):
        kind = CUMULANT_KINDS[p - 1]
        out.append(LogscaleDiagram(
            kind=kind, j=js, value=rows[:, p - 1], variance=_NOMINAL_VARIANCE[kind] / ns,
            n_j=ns, delta0=lp.delta0,
            provenance={"label": lp.source.label, "gamma": lp.gamma,
                        "j_min_valid": lp.j_min_valid},
        ))
    return out


def zeta_from_cumulants(q, c1, c2, c3=0.0):
    """Second/third-order polynomial approximation of the scaling function."""
    q = np.asarray(q, dtype=float)
    return c1 * q + c2 * q ** 2 / 2.0 + c3 * q ** 3 / 6.0


def parabolic_spectrum(h, c1, c2):
    """Parabolic multifractal spectrum ``1 + (h - c1)^2 / (2 c2)``; needs ``c2 < 0``."""
    if c2 >= 0:
        raise ValueError("parabolic spectrum requires c2 < 0")
    h = np.asarray(h, dtype=float)
    return 1.0 + (h - c1) ** 2 / (2.0 * c2)
