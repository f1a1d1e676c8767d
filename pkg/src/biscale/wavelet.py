"""Discrete wavelet pyramid with L1-normalised coefficients and the
second-order structure function log2 S_d(j).

The filter bank runs in "valid" mode only: a coefficient whose filter support
would reach past either end of the data is never computed, so every octave
holds only coefficients that are actually available.  Coefficient ``k`` at
octave ``j`` is the inner product of the input with a filter starting at
sample ``k * 2**j``, which keeps the dyadic tree aligned across octaves
(children of ``(j, k)`` are ``(j-1, 2k)`` and ``(j-1, 2k+1)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pywt
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import check_series
from .errors import SeriesTooShort
from .logscale import LOG2_SD, LogscaleDiagram

DEFAULT_WAVELET = "db3"
N_MIN = 8


def normalize_wavelet_name(wavelet) -> str:
    """Accept ``'haar'``, ``'db<N>'``, ``'daub<N>'`` or a number of vanishing moments."""
    if isinstance(wavelet, (int, np.integer)):
        n = int(wavelet)
    else:
        name = str(wavelet).lower()
        if name == "haar":
            return "haar"
        digits = name[4:] if name.startswith("daub") else name[2:]
        if not name.startswith("db") and not name.startswith("daub") or not digits.isdigit():
            raise ValueError(f"unsupported wavelet {wavelet!r}; use haar or db1..db10")
        n = int(digits)
    if not 1 <= n <= 10:
        raise ValueError("number of vanishing moments must be in 1..10")
    return "haar" if n == 1 else f"db{n}"


@lru_cache(maxsize=None)
def filters(wavelet=DEFAULT_WAVELET) -> tuple[np.ndarray, np.ndarray]:
    """Low- and high-pass analysis filters in correlation form."""
    w = pywt.Wavelet(normalize_wavelet_name(wavelet))
    lo = np.array(w.rec_lo, dtype=float)
    hi = np.array(w.rec_hi, dtype=float)
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


def vanishing_moments(wavelet) -> int:
    name = normalize_wavelet_name(wavelet)
    return 1 if name == "haar" else int(name[2:])


def _analysis_step(a: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    windows = sliding_window_view(a, lo.size)[::2]
    return windows @ lo, windows @ hi


@dataclass(frozen=True)
class WaveletPyramid:
    """L1-normalised coefficients ``d_X(j, k)`` per octave ``j >= 1``."""

    wavelet: str
    octaves: dict
    delta0: float = 1.0
    n_samples: int = 0
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def js(self) -> list[int]:
        return sorted(self.octaves)

    def n_j(self, j: int) -> int:
        return int(self.octaves[j].size)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.octaves[j]


def dwt(series, wavelet=DEFAULT_WAVELET, j_max=None, delta0=None) -> WaveletPyramid:
    """Compute the wavelet pyramid of a binned series.

    ``series`` may be a :class:`~biscale.aggregate.BinnedSeries` or any 1-D
    array.  With ``j_max=None`` the decomposition runs as deep as at least
    one coefficient survives.
    """
    x, d0, label = _unpack(series, delta0)
    name = normalize_wavelet_name(wavelet)
    lo, hi = filters(name)
    if j_max is not None and j_max < 1:
        raise ValueError("j_max must be >= 1")

    octaves = {}
    a = x
    j = 0
    while a.size >= lo.size and (j_max is None or j < j_max):
        j += 1
        a, d = _analysis_step(a, lo, hi)
        d = d * 2.0 ** (-j / 2.0)
        d.setflags(write=False)
        octaves[j] = d
    if j_max is not None and j < j_max:
        raise SeriesTooShort(
            f"series of length {x.size} supports octaves up to {j} with {name}, "
            f"j_max={j_max} requested", j_max_achievable=j)
    if not octaves:
        raise SeriesTooShort(f"series of length {x.size} is shorter than the {name} filter")
    return WaveletPyramid(wavelet=name, octaves=octaves, delta0=d0, n_samples=x.size, label=label)


def structure_fn(pyramid: WaveletPyramid, n_min: int = N_MIN) -> LogscaleDiagram:
    """log2 of the mean squared coefficient per octave.

    The variance column holds the Gaussian asymptotic ``2 / (n_j ln^2 2)``.
    Octaves with fewer than ``n_min`` coefficients, or with identically zero
    coefficients, are left out.
    """
    js, vals, ns = [], [], []
    for j in pyramid.js:
        d = pyramid[j]
        if d.size < max(n_min, 2):
            continue
        s = np.mean(d * d)
        if s <= 0.0:
            continue
        js.append(j)
        vals.append(np.log2(s))
        ns.append(d.size)
    ns = np.asarray(ns, dtype=float)
    return LogscaleDiagram(
        kind=LOG2_SD, j=js, value=vals, variance=sd_variance(ns), n_j=ns,
        delta0=pyramid.delta0, provenance={"label": pyramid.label},
    )


def sd_variance(n_j):
    return 2.0 / (np.asarray(n_j, dtype=float) * np.log(2.0) ** 2)


def synthesize_periodic(details: dict, wavelet=DEFAULT_WAVELET, approx=None) -> np.ndarray:
    """Inverse periodic transform from L1-normalised detail coefficients.

    ``details[j]`` must have length ``N / 2**j`` for a common power-of-two
    ``N``.  The result analysed with :func:`dwt` reproduces ``details`` at every
    coefficient whose support does not wrap around the ends.
    """
    lo, hi = filters(wavelet)
    j_top = max(details)
    n_top = details[j_top].size
    a = np.zeros(n_top) if approx is None else np.asarray(approx, dtype=float).copy()
    for j in range(j_top, 0, -1):
        d = np.asarray(details.get(j, np.zeros(a.size)), dtype=float) * 2.0 ** (j / 2.0)
        if d.size != a.size:
            raise ValueError(f"octave {j}: expected {a.size} coefficients, got {d.size}")
        m = 2 * a.size
        out = np.zeros(m)
        base = 2 * np.arange(a.size)
        for n in range(lo.size):
            out[(base + n) % m] += lo[n] * a + hi[n] * d
        a = out
    return a


def analyze_periodic(x, wavelet=DEFAULT_WAVELET, j_max=None):
    """Periodic forward transform, the exact inverse of :func:`synthesize_periodic`.

    Returns ``(details, approx)`` with L1-normalised ``details[j]`` of length
    ``N / 2**j``; ``N`` must be divisible by ``2**j_max``.
    """
    lo, hi = filters(wavelet)
    a = check_series(x, min_length=2)
    if j_max is None:
        j_max = int(np.log2(a.size & -a.size))
    if a.size % 2 ** j_max:
        raise ValueError(f"length {a.size} is not divisible by 2**{j_max}")
    details = {}
    for j in range(1, j_max + 1):
        m = a.size
        idx = (2 * np.arange(m // 2)[:, None] + np.arange(lo.size)) % m
        windows = a[idx]
        a, d = windows @ lo, windows @ hi
        details[j] = d * 2.0 ** (-j / 2.0)
    return details, a


def _unpack(series, delta0):
    d0 = getattr(series, "delta0", None)
    label = getattr(series, "label", "")
    values = getattr(series, "counts", series)
    x = check_series(values)
    if delta0 is not None:
        d0 = float(delta0)
    return x, float(d0) if d0 is not None else 1.0, label
