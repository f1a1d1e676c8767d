"""Robust scaling analysis of packet traces.

Wavelet and wavelet-leader logscale diagrams of packet-count series,
sketch-based median diagrams, estimation of H, c1 and c2 with bootstrap
confidence intervals, biscaling frontier detection, flow-level tail and
RTT analyses, and synthetic generators with known scaling.
"""

__version__ = "0.1.0"

from .aggregate import BinnedSeries, aggregate, load_series, read_series, write_series
from .errors import BiscaleError
from .estimate import (
    BiscalingReport,
    ScalingEstimate,
    bootstrap_ci,
    find_frontier,
    fit_scaling,
    range_presets,
)
from .estimators import PartialCorrelation, ScalingEstimator, ScalingFeatures, TailIndexEstimator
from .flows import build_flows, karn_rtt, partial_correlations, rtt_partition, tail_index
from .ingest import FiveTuple, PacketArrays, PacketRecord, TcpMeta, open_trace
from .leaders import compute_leaders, cumulants, leader_structure_fn
from .logscale import LogscaleDiagram
from .sketch import median_ld, partition
from .synth import gen_cascade, gen_fgn, gen_onoff, gen_poisson, inject_anomaly
from .wavelet import WaveletPyramid, dwt, structure_fn

__all__ = [
    "BinnedSeries", "BiscaleError", "BiscalingReport", "FiveTuple", "LogscaleDiagram",
    "PacketArrays", "PacketRecord", "PartialCorrelation", "ScalingEstimate", "ScalingEstimator",
    "ScalingFeatures", "TailIndexEstimator", "TcpMeta", "WaveletPyramid", "aggregate",
    "bootstrap_ci", "build_flows", "compute_leaders", "cumulants", "dwt", "find_frontier",
    "fit_scaling", "gen_cascade", "gen_fgn", "gen_onoff", "gen_poisson", "inject_anomaly",
    "karn_rtt", "leader_structure_fn", "load_series", "median_ld", "open_trace",
    "partial_correlations", "partition", "range_presets", "read_series", "rtt_partition",
    "structure_fn", "tail_index", "write_series",
]
