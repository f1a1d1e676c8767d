"""Synthetic traffic with known scaling parameters.

Every generator is a pure function of its arguments and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_generator
from .aggregate import BinnedSeries, aggregate
from .errors import EmbeddingNotPSD
from .ingest import ICMP, TCP, UDP, PacketArrays
from .wavelet import DEFAULT_WAVELET, analyze_periodic, synthesize_periodic

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# fractional Gaussian noise


def fgn_autocovariance(h: float, k) -> np.ndarray:
    """Unit-variance fGn autocovariance ``r(k)``."""
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * ((k + 1) ** (2 * h) - 2 * k ** (2 * h) + np.abs(k - 1) ** (2 * h))


def gen_fgn(h: float, n: int, seed=None, max_doublings: int = 1) -> np.ndarray:
    """Exact fGn by circulant embedding of its autocovariance."""
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    m_half = n
    for _ in range(max_doublings + 1):
        r = fgn_autocovariance(h, np.arange(m_half + 1))
        row = np.concatenate([r, r[-2:0:-1]])
        lam = np.fft.fft(row).real
        if lam.min() >= -1e-10 * lam.max():
            break
        m_half *= 2
    else:
        raise EmbeddingNotPSD(f"circulant embedding of fGn(H={h}) is not PSD")
    m = row.size
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(np.sqrt(np.clip(lam, 0.0, None) / m) * z).real[:n]


# --------------------------------------------------------------------------
# multiplicative cascade


def cascade_parameters(c1: float, c2: float) -> tuple[float, float]:
    """Mean and standard deviation of ``ln W`` giving log-cumulants ``(c1, c2)``."""
    if c2 > 0:
        raise ValueError("c2 must be <= 0")
    return -c1 * LN2, math.sqrt(-c2 * LN2)


def cascade_zeta(q, c1: float, c2: float):
    """Scaling function of the cascade leaders: exactly ``c1 q + c2 q^2 / 2``."""
    mu, sigma = cascade_parameters(c1, c2)
    q = np.asarray(q, dtype=float)
    return -(q * mu + q ** 2 * sigma ** 2 / 2.0) / LN2


@dataclass
class Cascade:
    series: np.ndarray
    levels: list = field(default_factory=list)
    multipliers: list = field(default_factory=list)
    signs: list = field(default_factory=list)


def gen_cascade(c1: float, c2: float, depth: int, seed=None, wavelet=DEFAULT_WAVELET,
                return_tree: bool = False, offset: float = 1.0):
    """Binary log-normal cascade realised in the wavelet domain.

    Tree level ``n`` (``2^n`` nodes, node values = product of the i.i.d.
    multipliers along the branch) sets the magnitude of the wavelet
    coefficients at octave ``depth - n``, with i.i.d. random signs and L1
    normalisation ``d = 2^{-j} * value``.  Leaders computed with one order of
    integration then scale with ``zeta(q) = c1 q + c2 q^2 / 2`` exactly in
    expectation, and ``H = c1 + c2``.  The series is shifted so its minimum
    equals ``offset``.
    """
    if depth < 2 or depth > 24:
        raise ValueError("depth must lie in [2, 24]")
    mu, sigma = cascade_parameters(c1, c2)
    rng = as_generator(seed)
    level = np.ones(1)
    levels, mults, signs = [level], [], []
    details = {}
    for n in range(1, depth):
        w = np.exp(mu + sigma * rng.standard_normal(2 ** n)) if sigma > 0 \
            else np.full(2 ** n, math.exp(mu))
        level = np.repeat(level, 2) * w
        s = rng.choice(np.array([-1.0, 1.0]), size=level.size)
        j = depth - n
        details[j] = s * level * 2.0 ** (-j)
        if return_tree:
            levels.append(level)
            mults.append(w)
            signs.append(s)
    root_sign = rng.choice(np.array([-1.0, 1.0]))
    details[depth] = np.array([root_sign * 2.0 ** (-depth)])
    x = synthesize_periodic(details, wavelet)
    x = x - x.min() + offset
    if return_tree:
        return Cascade(series=x, levels=levels, multipliers=mults, signs=signs)
    return x


# --------------------------------------------------------------------------
# Poisson


def gen_poisson(rate: float, duration: float, delta0: float, seed=None,
                label: str = "poisson") -> BinnedSeries:
    """Homogeneous Poisson arrivals binned at ``delta0``."""
    if rate < 0 or duration <= 0 or delta0 <= 0:
        raise ValueError("rate must be >= 0, duration and delta0 > 0")
    n = int(math.floor(duration / delta0))
    if n < 1:
        raise ValueError("duration shorter than one bin")
    counts = as_generator(seed).poisson(rate * delta0, n)
    return BinnedSeries(delta0, counts.astype(np.uint32), label=label,
                        meta={"generator": "poisson", "rate": rate})


# --------------------------------------------------------------------------
# heavy-tailed On/Off superposition


def pareto_scale(alpha: float, mean: float) -> float:
    """Pareto scale ``x_m`` whose mean is ``mean``."""
    return mean * (alpha - 1.0) / alpha


def _pareto(rng, alpha, x_m, size):
    return x_m * (1.0 - rng.random(size)) ** (-1.0 / alpha)


def _pareto_residual(rng, alpha, x_m, size):
    """Forward recurrence time of a stationary renewal process with Pareto periods."""
    u = 1.0 - rng.random(size)
    tail = u <= 1.0 / alpha
    out = np.empty(size)
    out[tail] = x_m * (alpha * u[tail]) ** (-1.0 / (alpha - 1.0))
    out[~tail] = x_m * alpha * (1.0 - u[~tail]) / (alpha - 1.0)
    return out


@dataclass
class OnOffResult:
    """Binned superposition plus its ground truth.

    ``flows`` holds one row per On period: ``source``, ``start``, ``end``
    (clipped to the observation window), ``duration`` (the drawn length) and
    ``censored`` (True when clipped at either edge).
    """

    series: BinnedSeries | None
    flows: dict
    packets: PacketArrays | None = None
    params: dict = field(default_factory=dict)

    @property
    def implied_h(self) -> float:
        return (3.0 - self.params["alpha"]) / 2.0


def onoff_periods(alpha: float, n_sources: int, mean_on: float, mean_off: float,
                  duration: float, seed=None) -> dict:
    """Stationary On periods of ``n_sources`` independent sources over ``[0, duration)``."""
    if not 1 < alpha < 2:
        raise ValueError("alpha must lie in (1, 2)")
    if n_sources < 1 or mean_on <= 0 or mean_off <= 0 or duration <= 0:
        raise ValueError("n_sources, mean_on, mean_off and duration must be positive")
    rng = as_generator(seed)
    x_m = pareto_scale(alpha, mean_on)
    p_on = mean_on / (mean_on + mean_off)

    on0 = rng.random(n_sources) < p_on
    first_on = _pareto_residual(rng, alpha, x_m, n_sources)
    first_off = rng.exponential(mean_off, n_sources)
    # sources starting Off begin with a residual Off period
    t = np.where(on0, 0.0, first_off)
    src_parts, start_parts, dur_parts, cens_parts = [], [], [], []
    first = np.ones(n_sources, dtype=bool)
    alive = np.arange(n_sources)
    k = max(8, int(1.2 * duration / (mean_on + mean_off)) + 8)
    while alive.size:
        on = _pareto(rng, alpha, x_m, (alive.size, k))
        fresh = first[alive] & on0[alive]
        on[fresh, 0] = first_on[alive][fresh]
        off = rng.exponential(mean_off, (alive.size, k))
        cycle = np.cumsum(on + off, axis=1)
        starts = t[alive, None] + np.concatenate(
            [np.zeros((alive.size, 1)), cycle[:, :-1]], axis=1)
        keep = starts < duration
        rows = np.nonzero(keep)
        src_parts.append(alive[rows[0]])
        start_parts.append(starts[rows])
        dur_parts.append(on[rows])
        cens = np.zeros(rows[0].size, dtype=bool)
        cens |= fresh[rows[0]] & (rows[1] == 0)
        cens_parts.append(cens)
        t[alive] = t[alive] + cycle[:, -1]
        first[alive] = False
        alive = alive[t[alive] < duration]
        k = max(8, k // 4)
    source = np.concatenate(src_parts)
    start = np.concatenate(start_parts)
    dur = np.concatenate(dur_parts)
    censored = np.concatenate(cens_parts)
    order = np.argsort(source, kind="stable")
    source, start, dur, censored = source[order], start[order], dur[order], censored[order]
    end = np.minimum(start + dur, duration)
    censored = censored | (start + dur > duration)
    return {"source": source, "start": start, "end": end, "duration": dur,
            "censored": censored}


def active_time(starts, ends, n_bins: int, delta0: float) -> np.ndarray:
    """Summed overlap of the intervals ``[start, end)`` with each bin."""
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    horizon = n_bins * delta0
    starts, ends = np.clip(starts, 0.0, horizon), np.clip(ends, 0.0, horizon)
    keep = ends > starts
    a, b = starts[keep], ends[keep]
    ia = np.minimum((a // delta0).astype(np.int64), n_bins - 1)
    ib = np.minimum((b // delta0).astype(np.int64), n_bins - 1)
    same = ia == ib
    out = np.zeros(n_bins)
    out += np.bincount(ia[same], weights=b[same] - a[same], minlength=n_bins)
    ia, ib, a, b = ia[~same], ib[~same], a[~same], b[~same]
    out += np.bincount(ia, weights=(ia + 1) * delta0 - a, minlength=n_bins)
    out += np.bincount(ib, weights=b - ib * delta0, minlength=n_bins)
    # bins strictly inside an interval are fully covered
    cover = np.bincount(ia + 1, minlength=n_bins + 1) - np.bincount(ib, minlength=n_bins + 1)
    out += np.cumsum(cover[:n_bins]) * delta0
    return out


def _period_number(source: np.ndarray) -> np.ndarray:
    """Rank of each On period within its source (rows sorted by source)."""
    first = np.searchsorted(source, source, side="left")
    return np.arange(source.size) - first


def source_address(i, base: int = 0x0A000000) -> np.ndarray:
    """IPv4 address (as uint32) of synthetic source ``i``: ``10.0.0.0 + i + 1``."""
    return (base + 1 + np.asarray(i, dtype=np.int64)).astype(np.uint32)


def gen_onoff(alpha: float, n_sources: int = 500, mean_on: float = 0.1, mean_off: float = 0.9,
              rate_on: float = 100.0, duration: float = 1800.0, delta0: float = 1e-3,
              seed=None, packets: bool = False) -> OnOffResult:
    """Superposition of On/Off sources with Pareto On and exponential Off periods.

    Sources start in their stationary regime.  While On a source emits
    Poisson(``rate_on``) packets.  With ``packets=False`` the emissions are
    drawn per bin from the active time only; with ``packets=True`` a full
    packet stream is built and binned: source ``i`` sends from
    ``10.0.0.0 + i + 1`` and each of its On periods uses its own source
    port, so every On period is a distinct 5-tuple.
    """
    if n_sources < 1:
        raise ValueError("n_sources must be >= 1")
    if rate_on <= 0 or delta0 <= 0:
        raise ValueError("rate_on and delta0 must be > 0")
    rng = as_generator(seed)
    flows = onoff_periods(alpha, n_sources, mean_on, mean_off, duration, rng)
    n_bins = int(math.floor(duration / delta0))
    params = {"generator": "onoff", "alpha": alpha, "n_sources": n_sources,
              "mean_on": mean_on, "mean_off": mean_off, "rate_on": rate_on,
              "duration": duration, "delta0": delta0}
    if not packets:
        lam = rate_on * active_time(flows["start"], flows["end"], n_bins, delta0)
        counts = rng.poisson(lam)
        series = BinnedSeries(delta0, counts.astype(np.uint32), label="onoff", meta=params)
        return OnOffResult(series, flows, None, params)

    span = flows["end"] - flows["start"]
    n_pk = rng.poisson(rate_on * span)
    flows["packets"] = n_pk
    owner = np.repeat(np.arange(span.size), n_pk)
    ts = flows["start"][owner] + rng.random(owner.size) * span[owner]
    src = source_address(flows["source"][owner])
    stream = PacketArrays.from_columns(
        ts, np.full(ts.size, 1500), src, np.full(ts.size, 0xC6336401, dtype=np.uint32),
        src_port=(1024 + _period_number(flows["source"])[owner] % 64000).astype(np.int32),
        dst_port=np.full(ts.size, 80, dtype=np.int32),
        proto=np.full(ts.size, TCP, dtype=np.int16),
    ).sorted()
    series = aggregate(stream, delta0, label="onoff", n_bins=n_bins)
    series = BinnedSeries(delta0, series.counts, label="onoff", meta=params)
    return OnOffResult(series, flows, stream, params)


# --------------------------------------------------------------------------
# anomaly overlay


@dataclass(frozen=True)
class AnomalySpec:
    """Single-source train of periodic bursts.

    ``fraction`` is the anomaly's share of the merged volume; alternatively
    ``burst_packets`` fixes the burst size directly.
    """

    period: float = 3.0
    fraction: float = 0.3
    burst_packets: int | None = None
    burst_width: float = 0.05
    src_ip: int = 0xC0000242  # 192.0.2.66
    dst_ip: int = 0xC6336402
    protocol: int = ICMP
    phase: float = 0.0


def anomaly_times(spec: AnomalySpec, n_base: int, duration: float, seed=None) -> np.ndarray:
    if spec.period <= 0 or duration <= 0:
        raise ValueError("period and duration must be > 0")
    if not 0 <= spec.fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    starts = np.arange(spec.phase, duration, spec.period)
    starts = starts[starts + spec.burst_width <= duration]
    if spec.burst_packets is not None:
        per = int(spec.burst_packets)
    else:
        total = spec.fraction / (1.0 - spec.fraction) * n_base
        per = int(round(total / max(starts.size, 1)))
    if per <= 0 or starts.size == 0:
        return np.zeros(0)
    rng = as_generator(seed)
    offsets = np.sort(rng.random((starts.size, per)), axis=1) * spec.burst_width
    return (starts[:, None] + offsets).ravel()


def inject_anomaly(base, spec: AnomalySpec = AnomalySpec(), duration: float | None = None,
                   seed=None):
    """Overlay a single-source burst train on ``base``.

    ``base`` is a :class:`PacketArrays` (the merged, time-sorted stream is
    returned) or a :class:`BinnedSeries` (anomaly counts are added per bin).
    A zero-volume anomaly returns ``base`` unchanged.
    """
    if isinstance(base, BinnedSeries):
        if duration is None:
            duration = base.duration
        t = anomaly_times(spec, base.total, duration, seed)
        if t.size == 0:
            return base
        extra = aggregate(t, base.delta0, n_bins=len(base)).counts
        return BinnedSeries(base.delta0, base.counts.astype(np.int64) + extra, base.start_time,
                            base.label, dict(base.meta, anomaly=_spec_dict(spec)))
    if not isinstance(base, PacketArrays):
        raise TypeError("base must be PacketArrays or BinnedSeries")
    if duration is None:
        duration = float(base.timestamp.max()) if len(base) else 0.0
    t = anomaly_times(spec, len(base), duration, seed)
    if t.size == 0:
        return base
    n = t.size
    extra = PacketArrays.from_columns(
        t, np.full(n, 84), np.full(n, spec.src_ip, dtype=np.uint32),
        np.full(n, spec.dst_ip, dtype=np.uint32), proto=np.full(n, spec.protocol, np.int16))
    merged = PacketArrays.concat([base, extra]).sorted()
    merged.meta["anomaly"] = _spec_dict(spec)
    return merged


def _spec_dict(spec: AnomalySpec) -> dict:
    return {"period": spec.period, "fraction": spec.fraction,
            "burst_packets": spec.burst_packets, "burst_width": spec.burst_width,
            "src_ip": int(spec.src_ip), "protocol": int(spec.protocol)}


# --------------------------------------------------------------------------
# spliced biscaling fixture


def gen_biscaling(j_frontier: int = 10, c1: float = 0.64, c2: float = -0.044, h: float = 0.9,
                  depth: int = 20, seed=None, wavelet=DEFAULT_WAVELET) -> np.ndarray:
    """Cascade details up to ``j_frontier``, fGn details above it.

    Both components are analysed with the periodic transform; the fGn
    octaves are rescaled so the two components carry the same realised
    energy at ``j_frontier`` and the spliced pyramid is synthesised back.
    Fine scales then follow the cascade (``H = c1 + c2``) and coarse scales
    the fGn (``h``), with the two power laws meeting at ``j_frontier``.
    """
    if not 1 <= j_frontier < depth:
        raise ValueError("j_frontier must lie in [1, depth)")
    rng = as_generator(seed)
    dc, _ = analyze_periodic(gen_cascade(c1, c2, depth, rng, wavelet), wavelet, depth)
    df, _ = analyze_periodic(gen_fgn(h, 2 ** depth, rng), wavelet, depth)
    scale = math.sqrt(np.mean(dc[j_frontier] ** 2) / np.mean(df[j_frontier] ** 2))
    details = {j: dc[j] if j <= j_frontier else scale * df[j] for j in dc}
    x = synthesize_periodic(details, wavelet)
    return x - x.min() + 1.0


# --------------------------------------------------------------------------
# generator specs and sidecars

GENERATOR_KINDS = ("fgn", "cascade", "onoff", "poisson", "anomaly", "biscaling")


@dataclass(frozen=True)
class GeneratorSpec:
    """A generator kind, its parameters and a seed; ``generate`` is pure."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator {self.kind!r}")
        p = self.params
        if self.kind == "fgn" and not 0 < p.get("h", 0.8) < 1:
            raise ValueError("fgn: h must lie in (0, 1)")
        if self.kind == "cascade" and p.get("c2", -0.044) > 0:
            raise ValueError("cascade: c2 must be <= 0")
        if self.kind in ("onoff", "anomaly") and not 1 < p.get("alpha", 1.5) < 2:
            raise ValueError("onoff: alpha must lie in (1, 2)")

    def generate(self) -> BinnedSeries:
        p, seed = dict(self.params), self.seed
        delta0 = p.pop("delta0", 1.0)
        if self.kind == "fgn":
            x = gen_fgn(p.get("h", 0.8), int(p.get("n", 2 ** 20)), seed)
            return BinnedSeries(delta0, x, label="fgn", meta=self.to_dict())
        if self.kind == "cascade":
            x = gen_cascade(p.get("c1", 0.64), p.get("c2", -0.044), int(p.get("depth", 20)), seed)
            return BinnedSeries(delta0, x, label="cascade", meta=self.to_dict())
        if self.kind == "biscaling":
            x = gen_biscaling(int(p.get("j_frontier", 10)), p.get("c1", 0.64), p.get("c2", -0.044),
                              p.get("h", 0.9), int(p.get("depth", 20)), seed)
            return BinnedSeries(delta0, x, label="biscaling", meta=self.to_dict())
        if self.kind == "poisson":
            s = gen_poisson(p.get("rate", 1000.0), p.get("duration", 60.0), delta0, seed)
            return BinnedSeries(delta0, s.counts, label="poisson", meta=self.to_dict())
        onoff_keys = ("alpha", "n_sources", "mean_on", "mean_off", "rate_on", "duration")
        kw = {k: p[k] for k in onoff_keys if k in p}
        kw.setdefault("alpha", 1.5)
        if self.kind == "onoff":
            res = gen_onoff(delta0=delta0, seed=seed, **kw)
            return BinnedSeries(delta0, res.series.counts, label="onoff", meta=self.to_dict())
        rng = as_generator(seed)
        res = gen_onoff(delta0=delta0, seed=rng, **kw)
        spec = AnomalySpec(period=p.get("period", 3.0), fraction=p.get("fraction", 0.3))
        s = inject_anomaly(res.series, spec, seed=rng)
        return BinnedSeries(delta0, s.counts, label="anomaly", meta=self.to_dict())

    def to_dict(self) -> dict:
        truth = dict(self.params)
        if self.kind == "fgn":
            truth.setdefault("h", 0.8)
        elif self.kind == "onoff":
            truth["implied_h"] = (3.0 - truth.get("alpha", 1.5)) / 2.0
        elif self.kind == "poisson":
            truth["h"] = 0.5
        return {"kind": self.kind, "seed": self.seed, "params": truth}


def write_sidecar(series_path, spec: GeneratorSpec) -> str:
    """Write ground truth next to ``series_path`` as ``<path>.json``."""
    import json

    out = f"{series_path}.json"
    with open(out, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
