"""Flow tables, flow-size tails, Karn RTT sampling and correlation analysis."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import stats

from ._validation import as_generator, check_probability
from .aggregate import DEFAULT_DELTA0, BinnedSeries
from .errors import DegenerateTail, SingularCovariance, TooFewFlows
from .ingest import FIN, RST, SYN, TCP, FiveTuple, PacketArrays, PacketRecord, as_arrays

FLOW_TIMEOUT = 64.0
TAIL_QUANTILES = (0.95, 0.999)
TAIL_RESAMPLES = 199
TAIL_POINTS = 30
MIN_TAIL_FLOWS = 1000
MIN_DISTINCT_SIZES = 20
RTT_CLASSES = 4
MIN_FLOWS_PER_CLASS = 100


# --------------------------------------------------------------------------
# flow table


@dataclass
class FlowRecord:
    key: FiveTuple
    packet_count: int
    byte_count: int
    first_ts: float
    last_ts: float
    rtt_samples: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rtt_median(self) -> Optional[float]:
        return float(np.median(self.rtt_samples)) if len(self.rtt_samples) else None

    @property
    def duration(self) -> float:
        return self.last_ts - self.first_ts


@dataclass
class FlowTable:
    """Flows plus the flow id of every input packet (in input order)."""

    flows: list
    packet_flow: np.ndarray

    def __len__(self):
        return len(self.flows)

    def __iter__(self):
        return iter(self.flows)

    def __getitem__(self, i):
        return self.flows[i]

    def sizes(self) -> np.ndarray:
        return np.array([f.packet_count for f in self.flows], dtype=np.int64)

    def rtt_medians(self) -> np.ndarray:
        return np.array([np.nan if f.rtt_median is None else f.rtt_median for f in self.flows])

    def to_rows(self) -> list[dict]:
        rows = []
        for f in self.flows:
            rows.append({
                "src_ip": f.key.src, "dst_ip": f.key.dst, "src_port": f.key.src_port,
                "dst_port": f.key.dst_port, "proto": f.key.protocol_name,
                "packets": f.packet_count, "bytes": f.byte_count,
                "first_ts": f.first_ts, "last_ts": f.last_ts,
                "rtt_samples": len(f.rtt_samples),
                "rtt_median": f.rtt_median,
            })
        return rows


def _tuple_columns(p: PacketArrays) -> np.ndarray:
    return np.column_stack([p.src.astype(np.int64), p.dst.astype(np.int64),
                            p.src_port, p.dst_port, p.proto, p.is_v6]).astype(np.int64)


def build_flows(packets, timeout: float = FLOW_TIMEOUT) -> FlowTable:
    """Group packets by 5-tuple; an idle gap longer than ``timeout`` starts a new flow."""
    p = as_arrays(packets)
    n = len(p)
    if n == 0:
        return FlowTable([], np.zeros(0, dtype=np.int64))
    cols = _tuple_columns(p)
    _, tuple_id = np.unique(cols, axis=0, return_inverse=True)
    tuple_id = tuple_id.ravel()
    order = np.lexsort((np.arange(n), p.timestamp, tuple_id))
    tid, ts = tuple_id[order], p.timestamp[order]
    new = np.ones(n, dtype=bool)
    new[1:] = (tid[1:] != tid[:-1]) | (np.diff(ts) > timeout)
    seg = np.cumsum(new) - 1
    # number flows by first appearance in time
    starts = np.flatnonzero(new)
    rank = np.empty(starts.size, dtype=np.int64)
    rank[np.lexsort((order[starts], ts[starts]))] = np.arange(starts.size)
    flow_sorted = rank[seg]
    packet_flow = np.empty(n, dtype=np.int64)
    packet_flow[order] = flow_sorted

    k = starts.size
    counts = np.bincount(packet_flow, minlength=k)
    nbytes = np.bincount(packet_flow, weights=p.size, minlength=k).astype(np.int64)
    first = np.full(k, np.inf)
    last = np.full(k, -np.inf)
    np.minimum.at(first, packet_flow, p.timestamp)
    np.maximum.at(last, packet_flow, p.timestamp)
    rep = np.empty(k, dtype=np.int64)
    rep[flow_sorted[starts]] = order[starts]
    flows = []
    for f in range(k):
        i = int(rep[f])
        key = FiveTuple(p.address_bytes(p.src, i), p.address_bytes(p.dst, i),
                        int(p.src_port[i]), int(p.dst_port[i]), int(p.proto[i]))
        flows.append(FlowRecord(key, int(counts[f]), int(nbytes[f]), float(first[f]),
                                float(last[f])))
    return FlowTable(flows, packet_flow)


# --------------------------------------------------------------------------
# flow-size tail


@dataclass(frozen=True)
class TailEstimate:
    alpha: float
    ci: tuple
    quantile_range: tuple
    hill_alpha: float
    n_flows: int
    n_points: int

    @property
    def implied_h(self) -> float:
        return implied_h(self.alpha)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "ci": list(self.ci),
                "quantile_range": list(self.quantile_range), "hill_alpha": self.hill_alpha,
                "implied_h": self.implied_h, "n_flows": self.n_flows, "n_points": self.n_points}


def implied_h(alpha: float) -> float:
    """Hurst parameter ``(3 - alpha) / 2`` of an On/Off superposition."""
    return (3.0 - alpha) / 2.0


def ccdf_regression(x, ccdf, weights=None) -> tuple[float, float]:
    """Weighted LS of ``log10 ccdf`` on ``log10 x``; returns ``(alpha, intercept)``."""
    lx = np.log10(np.asarray(x, dtype=float))
    ly = np.log10(np.asarray(ccdf, dtype=float))
    w = np.ones_like(lx) if weights is None else np.asarray(weights, dtype=float)
    slope, intercept = np.polyfit(lx, ly, 1, w=np.sqrt(w))
    return float(-slope), float(intercept)


def _tail_points(sorted_sizes, q_lo, q_hi, n_points):
    n = sorted_sizes.size
    lo, hi = np.quantile(sorted_sizes, [q_lo, q_hi])
    inside = sorted_sizes[(sorted_sizes >= lo) & (sorted_sizes <= hi)]
    if np.unique(inside).size < MIN_DISTINCT_SIZES or not lo > 0:
        raise DegenerateTail(
            f"fewer than {MIN_DISTINCT_SIZES} distinct sizes between quantiles {q_lo} and {q_hi}")
    grid = np.unique(np.geomspace(lo, hi, n_points))
    # empirical P(X >= x)
    ccdf = (n - np.searchsorted(sorted_sizes, grid, side="left")) / n
    weights = n * ccdf / np.clip(1.0 - ccdf, 1.0 / n, None)
    return grid, ccdf, weights


def hill_estimator(sizes, k: int) -> float:
    x = np.sort(np.asarray(sizes, dtype=float))
    if not 1 <= k < x.size:
        raise ValueError("k must lie in [1, n)")
    top = x[-k:]
    return float(k / np.sum(np.log(top / x[-k - 1])))


def tail_index(sizes, q_lo: float = TAIL_QUANTILES[0], q_hi: float = TAIL_QUANTILES[1],
               resamples: int = TAIL_RESAMPLES, seed=None, n_points: int = TAIL_POINTS,
               confidence: float = 0.95) -> TailEstimate:
    """Tail index from a log-log CCDF regression, with a Hill cross-check and
    a flow-level bootstrap percentile CI."""
    x = np.sort(np.asarray(sizes, dtype=float))
    if x.size < MIN_TAIL_FLOWS:
        raise TooFewFlows(f"need >= {MIN_TAIL_FLOWS} flows, got {x.size}")
    if not 0.5 <= q_lo < q_hi < 1:
        raise ValueError("need 0.5 <= q_lo < q_hi < 1")
    grid, ccdf, w = _tail_points(x, q_lo, q_hi, n_points)
    alpha, _ = ccdf_regression(grid, ccdf, w)
    k = max(1, int(math.floor((1.0 - q_lo) * x.size)))
    hill = hill_estimator(x, min(k, x.size - 1))
    rng = as_generator(seed)
    boot = []
    for _ in range(resamples):
        xb = np.sort(x[rng.integers(0, x.size, x.size)])
        try:
            g, c, wb = _tail_points(xb, q_lo, q_hi, n_points)
        except DegenerateTail:
            continue
        boot.append(ccdf_regression(g, c, wb)[0])
    if boot:
        half = (1.0 - confidence) / 2.0
        lo, hi = np.quantile(boot, [half, 1.0 - half])
        ci = (float(min(lo, alpha)), float(max(hi, alpha)))
    else:
        ci = (alpha, alpha)
    return TailEstimate(alpha=alpha, ci=ci, quantile_range=(q_lo, q_hi), hill_alpha=hill,
                        n_flows=int(x.size), n_points=int(grid.size))


# --------------------------------------------------------------------------
# Karn RTT

_U32 = 2 ** 32


def _unwrap(x: int, ref: int) -> int:
    """Unwrap 32-bit sequence ``x`` to the 64-bit value closest to ``ref``."""
    return ref + ((x - ref + 2 ** 31) % _U32) - 2 ** 31


class _Ranges:
    """Union of half-open integer intervals."""

    def __init__(self):
        self.starts: list = []
        self.ends: list = []

    def overlaps(self, a: int, b: int) -> bool:
        i = bisect.bisect_right(self.starts, a)
        if i and self.ends[i - 1] > a:
            return True
        return i < len(self.starts) and self.starts[i] < b

    def add(self, a: int, b: int):
        i = bisect.bisect_left(self.ends, a)
        j = bisect.bisect_right(self.starts, b)
        if i < j:
            a = min(a, self.starts[i])
            b = max(b, self.ends[j - 1])
        self.starts[i:j] = [a]
        self.ends[i:j] = [b]


class _Direction:
    def __init__(self):
        self.ref = None
        self.sent = _Ranges()
        self.retx = _Ranges()
        self.pending = []  # (end, start, t, flow, clean)


def _segment_length(meta) -> int:
    return meta.payload_len + (1 if meta.flags & SYN else 0) + (1 if meta.flags & FIN else 0)


def karn_samples(records: Iterable[PacketRecord], flow_ids=None,
                 timeout: float = FLOW_TIMEOUT) -> list[tuple]:
    """RTT samples ``(flow_id, t_data, rtt)`` from TCP packets.

    A data segment (payload plus SYN/FIN) is matched with the first reverse
    ACK covering its last byte.  Segments overlapping bytes sent earlier are
    retransmissions and never yield samples; an ACK newly covering any
    retransmitted range yields no sample at all.
    """
    state = {}
    last_seen = {}
    out = []
    for i, r in enumerate(records):
        m = r.tcp_meta
        if r.flow_key.protocol != TCP or m is None:
            continue
        k = r.flow_key
        fwd = (k.src_ip, k.src_port, k.dst_ip, k.dst_port)
        conn = (min(fwd, fwd[2:] + fwd[:2]), max(fwd, fwd[2:] + fwd[:2]))
        if conn in last_seen and r.timestamp - last_seen[conn] > timeout:
            state.pop(conn, None)
        last_seen[conn] = r.timestamp
        dirs = state.setdefault(conn, {})
        mine = dirs.setdefault(fwd, _Direction())
        other = dirs.setdefault(fwd[2:] + fwd[:2], _Direction())
        flow = i if flow_ids is None else int(flow_ids[i])

        if m.has_ack and other.ref is not None and not m.rst:
            ack = _unwrap(m.ack, other.ref)
            covered = [p for p in other.pending if p[0] <= ack]
            if covered:
                other.pending = [p for p in other.pending if p[0] > ack]
                lo = min(p[1] for p in covered)
                if not other.retx.overlaps(lo, ack):
                    for end, start, t, fl, clean in covered:
                        if clean:
                            out.append((fl, t, r.timestamp - t))

        length = _segment_length(m)
        if length <= 0 or m.rst:
            continue
        seq = m.seq if mine.ref is None else _unwrap(m.seq, mine.ref)
        if mine.ref is None:
            mine.ref = seq
        mine.ref = max(mine.ref, seq)
        a, b = seq, seq + length
        if mine.sent.overlaps(a, b):
            mine.retx.add(a, b)
            mine.pending = [p for p in mine.pending if not (p[1] < b and a < p[0])]
            mine.pending.append((b, a, r.timestamp, flow, False))
        else:
            mine.pending.append((b, a, r.timestamp, flow, True))
        mine.sent.add(a, b)
    return out


def karn_rtt(packets, timeout: float = FLOW_TIMEOUT) -> FlowTable:
    """Flow table with Karn RTT samples attached to the data-sending flow."""
    records = list(packets)
    table = build_flows(PacketArrays.from_records(records), timeout)
    samples = karn_samples(records, table.packet_flow, timeout)
    per = {}
    for flow, _, rtt in samples:
        if rtt > 0:
            per.setdefault(flow, []).append(rtt)
    for flow, rtts in per.items():
        table.flows[flow].rtt_samples = np.asarray(rtts)
    return table


# --------------------------------------------------------------------------
# RTT-conditioned sub-traces


@dataclass
class RttClass:
    subtrace: BinnedSeries
    j_r: float
    j_m: float
    median_rtt: float
    flows: np.ndarray


@dataclass
class RttClassPartition:
    boundaries: np.ndarray
    classes: list
    delta0: float

    def to_dict(self) -> dict:
        return {"delta0": self.delta0, "boundaries": [float(b) for b in self.boundaries],
                "classes": [{"j_r": c.j_r, "j_m": c.j_m, "median_rtt": c.median_rtt,
                             "flows": int(c.flows.size), "packets": c.subtrace.total}
                            for c in self.classes]}


def rtt_octave(rtt, delta0: float = DEFAULT_DELTA0):
    return np.log2(np.asarray(rtt, dtype=float) / delta0)


def rtt_partition(packets, flows: FlowTable, n_classes: int = RTT_CLASSES,
                  delta0: float = DEFAULT_DELTA0, min_flows_per_class: int = MIN_FLOWS_PER_CLASS,
                  n_bins: int | None = None, log_mad: bool = True) -> RttClassPartition:
    """Split RTT-bearing flows into equal-count RTT classes and bin each class.

    ``j_r`` is the octave of the class median RTT and ``j_m`` the MAD of the
    per-flow RTT octaves (``log_mad=False`` takes the MAD in seconds and
    converts it to an octave instead).
    """
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    p = as_arrays(packets)
    med = flows.rtt_medians()
    have = np.flatnonzero(~np.isnan(med))
    if have.size < n_classes * min_flows_per_class:
        raise TooFewFlows(f"need >= {n_classes * min_flows_per_class} RTT-bearing flows, "
                          f"got {have.size}")
    order = have[np.argsort(med[have], kind="stable")]
    label = np.full(len(flows), -1, dtype=np.int64)
    label[order] = np.arange(order.size) * n_classes // order.size
    bins = np.floor(p.timestamp / delta0).astype(np.int64)
    if n_bins is None:
        n_bins = int(bins.max()) + 1 if bins.size else 0
    pk_class = label[flows.packet_flow]
    classes, bounds = [], []
    for c in range(n_classes):
        members = np.flatnonzero(label == c)
        rtts = med[members]
        sel = (pk_class == c) & (bins < n_bins)
        counts = np.bincount(bins[sel], minlength=n_bins)
        m = float(np.median(rtts))
        if log_mad:
            octs = rtt_octave(rtts, delta0)
            j_m = float(np.median(np.abs(octs - np.median(octs))))
        else:
            mad = float(np.median(np.abs(rtts - m)))
            j_m = float(np.log2(mad / delta0)) if mad > 0 else float("-inf")
        classes.append(RttClass(
            subtrace=BinnedSeries(delta0, counts.astype(np.uint32), label=f"rtt{c}",
                                  meta={"rtt_class": c}),
            j_r=float(rtt_octave(m, delta0)), j_m=j_m, median_rtt=m, flows=members))
        bounds.append(float(rtts.max()))
    return RttClassPartition(np.asarray(bounds[:-1]), classes, delta0)


def frontier_rtt_regression(j_r, j_f, var_j_f=None) -> dict:
    """WLS of frontier octaves on RTT octaves, weights ``1 / var(j_f)``."""
    x = np.asarray(j_r, dtype=float)
    y = np.asarray(j_f, dtype=float)
    w = np.ones_like(x) if var_j_f is None else 1.0 / np.asarray(var_j_f, dtype=float)
    if x.size < 3:
        raise TooFewFlows("need >= 3 (j_r, j_f) pairs")
    sw = w.sum()
    xb, yb = w @ x / sw, w @ y / sw
    sxx = w @ (x - xb) ** 2
    slope = float(w @ ((x - xb) * (y - yb)) / sxx)
    resid = y - (yb + slope * (x - xb))
    s2 = float(w @ resid ** 2 / (x.size - 2))
    return {"slope": slope, "intercept": float(yb - slope * xb),
            "slope_se": math.sqrt(s2 / sxx), "n": int(x.size)}


# --------------------------------------------------------------------------
# direct and partial correlations


@dataclass
class Correlations:
    names: list
    direct: np.ndarray
    partial: np.ndarray
    n_obs: int
    direct_ci: tuple = ()
    partial_ci: tuple = ()

    def to_dict(self) -> dict:
        return {"names": list(self.names), "n_obs": self.n_obs,
                "direct": self.direct.tolist(), "partial": self.partial.tolist(),
                "direct_ci": [c.tolist() for c in self.direct_ci],
                "partial_ci": [c.tolist() for c in self.partial_ci]}


def _fisher_ci(r, se, confidence):
    z = np.arctanh(np.clip(r, -1 + 1e-15, 1 - 1e-15))
    q = stats.norm.ppf(0.5 + confidence / 2.0)
    lo, hi = np.tanh(z - q * se), np.tanh(z + q * se)
    np.fill_diagonal(lo, 1.0)
    np.fill_diagonal(hi, 1.0)
    return lo, hi


def partial_correlations(samples, names=None, confidence: float = 0.95,
                         rcond: float = 1e-12) -> Correlations:
    """Pearson and partial correlations of the rows of ``samples`` (variables x observations).

    Partial correlations come from the inverse correlation matrix ``P`` as
    ``-P_ij / sqrt(P_ii P_jj)``; CIs use the Fisher z transform.
    """
    check_probability(confidence, "confidence", 0.0, 1.0)
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D (variables x observations) array")
    p, n = x.shape
    if p < 2:
        raise ValueError("need at least 2 variables")
    if n < p + 2:
        raise TooFewFlows(f"need >= {p + 2} observations for {p} variables, got {n}")
    sd = x.std(axis=1)
    if np.any(sd == 0):
        raise SingularCovariance("a variable is constant")
    direct = np.corrcoef(x)
    if np.linalg.cond(direct) > 1.0 / rcond:
        raise SingularCovariance("correlation matrix is singular")
    prec = np.linalg.inv(direct)
    d = np.sqrt(np.diag(prec))
    partial = -prec / np.outer(d, d)
    np.fill_diagonal(partial, 1.0)
    partial = (partial + partial.T) / 2.0
    direct_ci = _fisher_ci(direct, 1.0 / math.sqrt(max(n - 3, 1)), confidence)
    partial_ci = _fisher_ci(partial, 1.0 / math.sqrt(max(n - 3 - (p - 2), 1)), confidence)
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    return Correlations(names, direct, partial, n, direct_ci, partial_ci)
