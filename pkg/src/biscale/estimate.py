"""Logscale-diagram regression, time-scale block bootstrap and frontier detection."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from ._validation import check_octave_range, default_seed
from .errors import DegenerateWeights, RangeNotCovered
from .leaders import LeaderPyramid
from .logscale import CUMULANT_KINDS, LOG2_SD, LogscaleDiagram, parse_sl_kind
from .wavelet import WaveletPyramid, sd_variance

LN2 = math.log(2.0)
DEFAULT_RESAMPLES = 499
DEFAULT_CONFIDENCE = 0.95
DEFAULT_GOF_THRESHOLD = 0.05
DEFAULT_S = 4
FRONTIER_Z = 3.0

ERAS = ("2001-2006", "2007-2014")
BLOCKS = ("trace15min", "block6h")


@dataclass(frozen=True)
class ScalingEstimate:
    parameter: str
    value: float
    ci_low: float
    ci_high: float
    j1: int
    j2: int
    gof_pvalue: float
    method: str
    kind: str
    slope: float
    slope_se: float
    intercept: float

    @property
    def range(self) -> tuple[int, int]:
        return self.j1, self.j2

    def covers(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high

    def accepted(self, threshold: float = DEFAULT_GOF_THRESHOLD) -> bool:
        return self.gof_pvalue > threshold

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def parameter_name(kind: str) -> str:
    if kind == LOG2_SD:
        return "H"
    if kind in CUMULANT_KINDS:
        return "c" + kind[-1]
    q = parse_sl_kind(kind)
    if q is not None:
        return f"zeta({q:g})"
    raise ValueError(kind)


def slope_to_parameter(kind: str, slope):
    """Map an LD regression slope to the scaling parameter it estimates."""
    if kind == LOG2_SD:
        return (np.asarray(slope) + 2.0) / 2.0
    if kind in CUMULANT_KINDS:
        return np.asarray(slope) / LN2
    return np.asarray(slope)


def _slope_scale(kind: str) -> float:
    if kind == LOG2_SD:
        return 0.5
    if kind in CUMULANT_KINDS:
        return 1.0 / LN2
    return 1.0


def _wls_design(j: np.ndarray, w: np.ndarray):
    """Row vector ``a`` such that ``slope = a @ y`` for weighted least squares."""
    sw = w.sum()
    jbar = np.dot(w, j) / sw
    sxx = np.dot(w, (j - jbar) ** 2)
    return w * (j - jbar) / sxx, jbar, sxx, sw


def _wls_slope(a: np.ndarray, w: np.ndarray, sw: float, y: np.ndarray):
    """``a @ y`` with ``y`` centred first; rows of a 2-D ``y`` are separate fits.

    Centring removes the rounding residue of ``sum(a)`` times the mean of
    ``y``, which matters when the weights span many decades.
    """
    ybar = (y @ w) / sw
    return (y - np.expand_dims(ybar, -1)) @ a


def _range_points(ld: LogscaleDiagram, j1: int, j2: int):
    if j2 - j1 < 2:
        raise RangeNotCovered(f"range [{j1}, {j2}] needs at least 3 octaves")
    sub = ld.select(j1, j2)
    missing = sorted(set(range(j1, j2 + 1)) - set(sub.octaves))
    if missing:
        raise RangeNotCovered(
            f"{ld.kind} LD lacks octaves {missing} of range [{j1}, {j2}] "
            f"(available {ld.octaves[0] if len(ld) else None}..{ld.octaves[-1] if len(ld) else None})")
    if np.any(~np.isfinite(sub.value)):
        raise RangeNotCovered(f"non-finite LD values in [{j1}, {j2}]")
    if np.any(sub.variance <= 0) or np.any(~np.isfinite(sub.variance)):
        raise DegenerateWeights(f"non-positive variance in [{j1}, {j2}]")
    return sub


def fit_scaling(ld: LogscaleDiagram, j1: int, j2: int, confidence: float = DEFAULT_CONFIDENCE,
                parameter: Optional[str] = None) -> ScalingEstimate:
    """Weighted least-squares fit of the LD over octaves ``[j1, j2]``.

    Weights are ``1 / variance(j)``; the confidence interval uses the
    regression variance implied by those weights, and the goodness of fit is
    the chi-square p-value of the weighted residuals with ``n - 2`` dof.
    """
    j1, j2 = check_octave_range((j1, j2))
    sub = _range_points(ld, j1, j2)
    j = sub.j.astype(float)
    y = sub.value
    w = 1.0 / sub.variance
    a, jbar, sxx, sw = _wls_design(j, w)
    slope = float(_wls_slope(a, w, sw, y))
    intercept = float(np.dot(w, y) / sw - slope * jbar)
    resid = y - (intercept + slope * j)
    chi2 = float(np.dot(w, resid ** 2))
    dof = j.size - 2
    gof = float(stats.chi2.sf(chi2, dof)) if chi2 > 0 else 1.0
    se = math.sqrt(1.0 / sxx)
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    value = float(slope_to_parameter(sub.kind, slope))
    half = z * se * _slope_scale(sub.kind)
    return ScalingEstimate(
        parameter=parameter or parameter_name(sub.kind), value=value,
        ci_low=value - half, ci_high=value + half, j1=j1, j2=j2, gof_pvalue=gof,
        method="wls", kind=sub.kind, slope=slope, slope_se=se, intercept=intercept,
    )


# --------------------------------------------------------------------------
# time-scale block bootstrap


def default_block_len(n_j: int) -> int:
    return int(max(2, round(n_j ** (1.0 / 3.0))))


def _octave_base(source, kind: str, j: int):
    """Per-coefficient quantity whose power sums give the LD statistic."""
    if kind == LOG2_SD:
        d = source[j]
        return d * d
    lead = source[j]
    lead = lead[lead > 0]
    q = parse_sl_kind(kind)
    if q is not None:
        return lead ** q
    return np.log(lead)


def _powers_for(kind: str) -> int:
    if kind in CUMULANT_KINDS:
        return int(kind[-1])
    return 1


def _stat_from_sums(kind: str, sums, n, shift):
    """LD value from power sums of a (shifted) resample of size ``n``."""
    s1 = sums[0]
    if kind == LOG2_SD or parse_sl_kind(kind) is not None:
        with np.errstate(divide="ignore"):
            return np.log2(s1 / n)
    m1 = s1 / n
    if kind == "C_1":
        return m1 + shift
    m2 = sums[1] / n - m1 ** 2
    if kind == "C_2":
        return m2 * n / (n - 1)
    m3 = sums[2] / n - 3 * m1 * sums[1] / n + 2 * m1 ** 3
    return m3 * n * n / ((n - 1) * (n - 2))


def _block_sums(x: np.ndarray, ell: int, powers: int):
    n = x.size
    ext = np.concatenate([x, x[:ell - 1]]) if ell > 1 else x
    out = []
    for p in range(1, powers + 1):
        cs = np.concatenate([[0.0], np.cumsum(ext ** p)])
        out.append(cs[ell:ell + n] - cs[:n])
    return out


def octave_seed(seed, j: int, stream: int = 0) -> np.random.SeedSequence:
    """Seed of the bootstrap stream for octave ``j``; independent of evaluation order."""
    if seed is None:
        seed = default_seed()
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(j)))


def bootstrap_resamples(source, kind: str, octaves, resamples: int = DEFAULT_RESAMPLES,
                        block_len=None, seed=None, stream: int = 0) -> np.ndarray:
    """Circular block bootstrap of the LD statistic, shape ``(resamples, len(octaves))``.

    Each octave is resampled on its own with blocks of ``block_len(j)``
    coefficients (``max(2, n_j^{1/3})`` by default).  Statistics are
    rebuilt from block power sums, so a resample costs O(n_j / block) work.
    """
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    out = np.empty((resamples, len(octaves)))
    powers = _powers_for(kind)
    for col, j in enumerate(octaves):
        x = np.asarray(_octave_base(source, kind, j), dtype=float)
        n = x.size
        shift = 0.0
        if kind in CUMULANT_KINDS:
            shift = float(x.mean())
            x = x - shift
        if callable(block_len):
            ell = int(block_len(j))
        elif block_len is None:
            ell = default_block_len(n)
        elif isinstance(block_len, dict):
            ell = int(block_len[j])
        else:
            ell = int(block_len)
        ell = min(max(ell, 1), n)
        nb = -(-n // ell)
        bsums = _block_sums(x, ell, powers)
        rng = np.random.default_rng(octave_seed(seed, j, stream))
        starts = rng.integers(0, n, size=(resamples, nb))
        sums = [bs[starts].sum(axis=1) for bs in bsums]
        out[:, col] = _stat_from_sums(kind, sums, float(nb * ell), shift)
    return out


def _source_ld(source, kind: str) -> LogscaleDiagram:
    from .leaders import cumulants, leader_structure_fn
    from .wavelet import structure_fn

    if kind == LOG2_SD:
        if not isinstance(source, WaveletPyramid):
            raise TypeError("log2_Sd bootstrap needs a WaveletPyramid")
        return structure_fn(source)
    if not isinstance(source, LeaderPyramid):
        raise TypeError(f"{kind} bootstrap needs a LeaderPyramid")
    q = parse_sl_kind(kind)
    if q is not None:
        return leader_structure_fn(source, q)
    return cumulants(source, p_max=int(kind[-1]))[int(kind[-1]) - 1]


def bootstrap_ld(source, kind: str, resamples: int = DEFAULT_RESAMPLES, block_len=None,
                 seed=None, ld: Optional[LogscaleDiagram] = None) -> LogscaleDiagram:
    """LD whose variance column is replaced by the bootstrap variance."""
    ld = ld if ld is not None else _source_ld(source, kind)
    boot = bootstrap_resamples(source, kind, ld.octaves, resamples, block_len, seed)
    var = np.var(boot, axis=0, ddof=1)
    prov = dict(ld.provenance, variance="bootstrap", resamples=resamples)
    return ld.replace(variance=var, provenance=prov)


def bootstrap_ci(source, kind: str, j1: int, j2: int, resamples: int = DEFAULT_RESAMPLES,
                 block_len=None, seed=None, confidence: float = DEFAULT_CONFIDENCE,
                 ld: Optional[LogscaleDiagram] = None,
                 parameter: Optional[str] = None) -> ScalingEstimate:
    """Percentile bootstrap confidence interval for a scaling parameter.

    The point estimate is the WLS fit of the original LD; every resample is
    refitted with the same weights.
    """
    if resamples < 99:
        raise ValueError("resamples must be >= 99")
    ld = ld if ld is not None else _source_ld(source, kind)
    base = fit_scaling(ld, j1, j2, confidence=confidence, parameter=parameter)
    octs = list(range(base.j1, base.j2 + 1))
    boot = bootstrap_resamples(source, kind, octs, resamples, block_len, seed)
    sub = ld.select(base.j1, base.j2)
    w = 1.0 / sub.variance
    a, _, _, sw = _wls_design(sub.j.astype(float), w)
    good = np.all(np.isfinite(boot), axis=1)
    slopes = _wls_slope(a, w, sw, boot[good])
    params = slope_to_parameter(kind, slopes)
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(params, [tail, 1.0 - tail])
    return ScalingEstimate(
        parameter=base.parameter, value=base.value,
        ci_low=float(min(lo, base.value)), ci_high=float(max(hi, base.value)),
        j1=base.j1, j2=base.j2, gof_pvalue=base.gof_pvalue, method="bootstrap",
        kind=kind, slope=base.slope, slope_se=float(np.std(slopes, ddof=1)),
        intercept=base.intercept,
    )


# --------------------------------------------------------------------------
# biscaling


@dataclass
class BiscalingReport:
    j_f: Optional[float]
    delta_f: Optional[float]
    fs_range: tuple
    cs_range: tuple
    fs_estimates: dict = field(default_factory=dict)
    cs_estimates: dict = field(default_factory=dict)
    departure_diff: dict = field(default_factory=dict)
    z_slope_difference: float = 0.0
    verdict: str = "monoscaling"

    @property
    def biscaling(self) -> bool:
        return self.j_f is not None

    def to_dict(self) -> dict:
        return {
            "j_f": self.j_f,
            "delta_f": self.delta_f,
            "fs_range": list(self.fs_range),
            "cs_range": list(self.cs_range),
            "fs_estimates": {k: v.to_dict() for k, v in self.fs_estimates.items()},
            "cs_estimates": {k: v.to_dict() for k, v in self.cs_estimates.items()},
            "departure_diff": {str(k): v for k, v in self.departure_diff.items()},
            "z_slope_difference": self.z_slope_difference,
            "verdict": self.verdict,
        }


def find_frontier(ld: LogscaleDiagram, fs_range, cs_range, z_crit: float = FRONTIER_Z,
                  fs_name: str = "h", cs_name: str = "H") -> BiscalingReport:
    """Locate the frontier octave between a fine and a coarse scaling range.

    Both ranges are fitted independently; the departures of the LD from each
    line are compared through ``D(j) = |dep_FS(j)| - |dep_CS(j)|`` and the
    frontier is the finest sign change of ``D`` at or above the start of the
    FS range, linearly interpolated.  When the two slopes do not differ by
    more than ``z_crit`` standard errors the LD is declared monoscaling and
    no frontier is reported.
    """
    fs = check_octave_range(fs_range, "fs_range")
    cs = check_octave_range(cs_range, "cs_range")
    if fs[1] >= cs[0]:
        raise ValueError(f"FS range {fs} must be entirely finer than CS range {cs}")
    fs_fit = fit_scaling(ld, *fs, parameter=fs_name if ld.kind == LOG2_SD else None)
    cs_fit = fit_scaling(ld, *cs, parameter=cs_name if ld.kind == LOG2_SD else None)
    report = BiscalingReport(
        j_f=None, delta_f=None, fs_range=fs, cs_range=cs,
        fs_estimates={fs_fit.parameter: fs_fit}, cs_estimates={cs_fit.parameter: cs_fit},
    )
    j = ld.j.astype(float)
    dep_fs = ld.value - (fs_fit.intercept + fs_fit.slope * j)
    dep_cs = ld.value - (cs_fit.intercept + cs_fit.slope * j)
    diff = np.abs(dep_fs) - np.abs(dep_cs)
    report.departure_diff = {int(a): float(b) for a, b in zip(ld.j, diff)}
    se = math.hypot(fs_fit.slope_se, cs_fit.slope_se)
    dslope = abs(fs_fit.slope - cs_fit.slope)
    report.z_slope_difference = float(dslope / se) if se > 0 else (math.inf if dslope else 0.0)
    if report.z_slope_difference <= z_crit:
        return report

    idx = np.flatnonzero(ld.j >= fs[0])
    for a, b in zip(idx[:-1], idx[1:]):
        if ld.j[b] != ld.j[a] + 1:
            continue
        da, db = diff[a], diff[b]
        if da * db <= 0 and not (da == 0 and db == 0):
            j_f = float(ld.j[a]) if da == db else float(ld.j[a] + da / (da - db))
            report.j_f = j_f
            report.delta_f = float(ld.delta0 * 2.0 ** j_f)
            report.verdict = "biscaling"
            break
    return report


def range_presets(era: str = "2007-2014", block: str = "trace15min") -> dict:
    """Published FS/CS octave windows for an era and analysis block length."""
    if era not in ERAS:
        raise ValueError(f"era must be one of {ERAS}")
    if block not in BLOCKS:
        raise ValueError(f"block must be one of {BLOCKS}")
    fs = (7, 10) if era == "2001-2006" else (4, 10)
    if block == "block6h":
        cs = (13, 23)
    else:
        cs = (13, 18) if era == "2001-2006" else (12, 18)
    return {"fs_range": fs, "cs_range": cs}


def coarsest_octave(j_d: int, s: int = DEFAULT_S) -> int:
    """Coarsest statistically usable octave ``j_D - S``."""
    return int(j_d) - int(s)

