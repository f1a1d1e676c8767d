"""Flow-preserving random projection of a trace into ``2^M`` sub-traces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import DEFAULT_SEED
from .aggregate import DEFAULT_DELTA0, BinnedSeries
from .errors import MismatchedGrids
from .ingest import PacketArrays, as_arrays
from .logscale import LogscaleDiagram

DEFAULT_M = 4
DEFAULT_KEY = "src"
MAD_SCALE = 1.4826

KEYS = ("src", "dst", "pair")
_KEY_ALIASES = {"src": "src", "srcip": "src", "dst": "dst", "dstip": "dst",
                "pair": "pair", "srcdstpair": "pair"}


def normalize_key(key: str) -> str:
    try:
        return _KEY_ALIASES[str(key).lower().replace("_", "").replace("-", "")]
    except KeyError:
        raise ValueError(f"key must be one of {KEYS}, got {key!r}") from None


class TabulationHash:
    """Seeded tabulation hash of keys made of 32-bit words.

    Each word ``x = (x0, x1)`` (two 16-bit characters) is hashed as
    ``T0[x0] ^ T1[x1] ^ T2[x0 + x1]``, which is 4-independent for a single
    word.  Multi-word keys XOR the per-position hashes.
    """

    def __init__(self, seed=DEFAULT_SEED):
        self.seed = int(seed)
        self._tables = {}
        self._salt = None

    def _position(self, pos: int):
        if pos not in self._tables:
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(pos,)))
            self._tables[pos] = (
                rng.integers(0, 2 ** 32, 2 ** 16, dtype=np.uint32),
                rng.integers(0, 2 ** 32, 2 ** 16, dtype=np.uint32),
                rng.integers(0, 2 ** 32, 2 ** 17, dtype=np.uint32),
            )
        return self._tables[pos]

    @property
    def v6_salt(self) -> np.uint32:
        if self._salt is None:
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(2 ** 20,)))
            self._salt = rng.integers(0, 2 ** 32, dtype=np.uint32)
        return self._salt

    def hash32(self, x, pos: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=np.uint32)
        t0, t1, t2 = self._position(pos)
        lo = x & np.uint32(0xFFFF)
        hi = x >> np.uint32(16)
        return t0[lo] ^ t1[hi] ^ t2[lo + hi]

    def hash_words(self, words, v6=None) -> np.ndarray:
        words = np.asarray(words, dtype=np.uint32)
        if words.ndim == 1:
            words = words[:, None]
        out = np.zeros(words.shape[0], dtype=np.uint32)
        for pos in range(words.shape[1]):
            col = words[:, pos]
            if not col.any():
                out ^= self.hash32(np.zeros(1, np.uint32), pos)[0]
            else:
                out ^= self.hash32(col, pos)
        if v6 is not None:
            out ^= np.where(np.asarray(v6, dtype=bool), self.v6_salt, np.uint32(0))
        return out

    def hash_bytes(self, key: bytes) -> int:
        """Hash of a single address (4 or 16 bytes) or address pair."""
        if len(key) % 4:
            raise ValueError("key length must be a multiple of 4 bytes")
        words = np.frombuffer(key, dtype=">u4").astype(np.uint32)
        if len(key) == 4:
            words = np.concatenate([np.zeros(3, np.uint32), words])
        return int(self.hash_words(words[None, :], [len(key) in (16, 32)])[0])


def key_words(packets: PacketArrays, key: str):
    key = normalize_key(key)
    if key == "src":
        return packets.src, packets.is_v6
    if key == "dst":
        return packets.dst, packets.is_v6
    return np.concatenate([packets.src, packets.dst], axis=1), packets.is_v6


def subtrace_index(packets, m: int = DEFAULT_M, key: str = DEFAULT_KEY,
                   seed=DEFAULT_SEED) -> np.ndarray:
    """Sub-trace index ``h(key) mod 2^m`` of every packet."""
    if not 1 <= m <= 12:
        raise ValueError("m must lie in [1, 12]")
    packets = as_arrays(packets)
    words, v6 = key_words(packets, key)
    h = TabulationHash(seed).hash_words(words, v6)
    return (h & np.uint32(2 ** m - 1)).astype(np.int64)


@dataclass
class SketchPartition:
    m: int
    key: str
    seed: int
    subtraces: list
    index: np.ndarray = field(repr=False, default=None)
    packet_counts: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.subtraces)

    def total(self) -> np.ndarray:
        """Pointwise sum of the sub-traces (equals the global series)."""
        return np.sum([s.counts.astype(np.int64) for s in self.subtraces], axis=0)

    def meta(self) -> dict:
        return {"m": self.m, "key": self.key, "seed": self.seed,
                "packets": [int(c) for c in self.packet_counts]}


def partition(packets, m: int = DEFAULT_M, key: str = DEFAULT_KEY, seed=DEFAULT_SEED,
              delta0: float = DEFAULT_DELTA0, n_bins: int | None = None) -> SketchPartition:
    """Split a packet stream into ``2^m`` sub-traces by hashing a flow key.

    Every sub-trace is binned on the global grid, so the sub-trace series
    share their length and sum to the global series bin by bin.
    """
    packets = as_arrays(packets)
    key = normalize_key(key)
    idx = subtrace_index(packets, m, key, seed)
    bins = np.floor(packets.timestamp / delta0).astype(np.int64)
    if bins.size and bins.min() < 0:
        raise ValueError("timestamps must be rebased to >= 0")
    if n_bins is None:
        n_bins = int(bins.max()) + 1 if bins.size else 0
    inside = bins < n_bins
    k = 2 ** m
    subs = []
    order = np.argsort(idx[inside], kind="stable")
    sorted_bins = bins[inside][order]
    bounds = np.searchsorted(idx[inside][order], np.arange(k + 1))
    for i in range(k):
        counts = np.bincount(sorted_bins[bounds[i]:bounds[i + 1]], minlength=n_bins)
        subs.append(BinnedSeries(delta0, counts.astype(np.uint32), 0.0, label=f"sketch{i}",
                                 meta={"sketch_index": i, "m": m, "key": key, "seed": int(seed)}))
    return SketchPartition(m=m, key=key, seed=int(seed), subtraces=subs, index=idx,
                           packet_counts=np.bincount(idx, minlength=k))


def subtrace_min_octave(j_tau: int, m: int = DEFAULT_M) -> int:
    """Finest meaningful octave of the sub-traces, ``j_tau + m``."""
    return int(j_tau) + int(m)


def median_ld(lds, common: bool = False) -> LogscaleDiagram:
    """Pointwise median of LDs over one octave grid.

    The variance at each octave is ``(1.4826 MAD)^2`` across inputs.  With
    ``common=True`` the LDs are first restricted to the octaves they all
    share instead of raising :class:`MismatchedGrids`.
    """
    lds = list(lds)
    if len(lds) < 3:
        raise ValueError("median_ld needs at least 3 LDs")
    kinds = {ld.kind for ld in lds}
    if len(kinds) != 1:
        raise MismatchedGrids(f"LDs mix statistic kinds {sorted(kinds)}")
    grids = [tuple(int(j) for j in ld.j) for ld in lds]
    if len(set(grids)) != 1:
        if not common:
            raise MismatchedGrids("LDs do not share an octave grid")
        shared = sorted(set.intersection(*(set(g) for g in grids)))
        if not shared:
            raise MismatchedGrids("LDs share no octave")
        lds = [_restrict(ld, shared) for ld in lds]
    values = np.vstack([ld.value for ld in lds])
    med = np.median(values, axis=0)
    mad = np.median(np.abs(values - med), axis=0)
    n_j = np.median(np.vstack([ld.n_j for ld in lds]), axis=0)
    first = lds[0]
    return LogscaleDiagram(
        kind=first.kind, j=first.j, value=med, variance=(MAD_SCALE * mad) ** 2, n_j=n_j,
        delta0=first.delta0,
        provenance={"label": "median", "inputs": len(lds),
                    **{k: v for k, v in first.provenance.items() if k in ("gamma", "seed")}},
    )


def _restrict(ld: LogscaleDiagram, octaves) -> LogscaleDiagram:
    keep = np.isin(ld.j, octaves)
    return ld.replace(j=ld.j[keep], value=ld.value[keep], variance=ld.variance[keep],
                      n_j=ld.n_j[keep])
