"""End-to-end analysis: trace -> series -> sketch -> LDs -> estimates -> frontier."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from ._validation import DEFAULT_SEED, check_octave_range
from .aggregate import DEFAULT_DELTA0, BinnedSeries, aggregate, read_series, read_series_csv
from .errors import BiscaleError
from .estimate import DEFAULT_CONFIDENCE, bootstrap_ci, find_frontier, fit_scaling, range_presets
from .flows import FLOW_TIMEOUT, build_flows, karn_rtt, rtt_partition, tail_index
from .ingest import CsvReader, PacketArrays, open_trace, sniff_format
from .leaders import DEFAULT_GAMMA, compute_leaders, cumulants
from .logscale import LOG2_SD, LogscaleDiagram
from .sketch import DEFAULT_KEY, DEFAULT_M, median_ld, partition
from .wavelet import DEFAULT_WAVELET, N_MIN, dwt, structure_fn

_PRESET = range_presets("2007-2014", "trace15min")

# parameter estimated from each LD kind, per scaling range
_PARAMS = {"log2_Sd": {"fs": "h", "cs": "H"}, "C_1": {"fs": "c1", "cs": "c1"},
           "C_2": {"fs": "c2", "cs": "c2"}}


@dataclass(frozen=True)
class AnalysisConfig:
    input: str = "-"
    format: str | None = None
    delta0: float = DEFAULT_DELTA0
    m: int = DEFAULT_M
    key: str = DEFAULT_KEY
    seed: int = DEFAULT_SEED
    fs: tuple = _PRESET["fs_range"]
    cs: tuple = _PRESET["cs_range"]
    wavelet: str = DEFAULT_WAVELET
    gamma: float = DEFAULT_GAMMA
    n_min: int = N_MIN
    bootstrap: int = 0
    confidence: float = DEFAULT_CONFIDENCE
    jobs: int = 1
    tail: bool = False
    rtt_classes: int = 0
    flow_timeout: float = FLOW_TIMEOUT
    lenient: bool = False
    no_timestamps: bool = False

    def to_dict(self) -> dict:
        # jobs only affects scheduling, so reports stay identical across it
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "jobs"}
        d["fs"] = list(self.fs)
        d["cs"] = list(self.cs)
        return d


@dataclass
class AnalysisReport:
    meta: dict
    config: dict
    lds: dict = field(default_factory=dict)
    estimates: list = field(default_factory=list)
    frontier: dict | None = None
    tail: dict | None = None
    rtt: dict | None = None
    errors: list = field(default_factory=list)

    @property
    def biscaling(self) -> bool:
        return bool(self.frontier and self.frontier.get("j_f") is not None)

    def to_dict(self) -> dict:
        return {"meta": self.meta, "config": self.config, "lds": self.lds,
                "estimates": self.estimates, "frontier": self.frontier, "tail": self.tail,
                "rtt": self.rtt, "errors": self.errors}


# --------------------------------------------------------------------------
# input


def _series_magic(path) -> bool:
    if path == "-":
        return False
    try:
        with open(path, "rb") as fh:
            head = fh.read(10)
    except OSError:
        return False
    return head[:4] in (b"BSC1", b"BSF1") or head.startswith(b"# delta0=")


def load_input(path, fmt=None, lenient=False):
    """Return ``("packets", records)`` or ``("series", BinnedSeries)``."""
    if fmt == "series" or (fmt is None and _series_magic(path)):
        with open(path, "rb") as fh:
            head = fh.read(4)
        return "series", (read_series(path) if head in (b"BSC1", b"BSF1")
                          else read_series_csv(path))
    if path == "-":
        text = sys.stdin.read()
        if text.startswith("# delta0="):
            return "series", read_series_csv(io.StringIO(text))
        return "packets", list(CsvReader(io.StringIO(text), lenient=lenient))
    fmt = fmt or sniff_format(path)
    return "packets", list(open_trace(path, fmt, lenient=lenient))


def _digest(path) -> str | None:
    if path == "-" or not os.path.isfile(path):
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------
# analysis


def series_lds(series, cfg: AnalysisConfig) -> dict:
    """``log2_Sd``, ``C_1`` and ``C_2`` diagrams of one series."""
    pyr = dwt(series, cfg.wavelet)
    out = {LOG2_SD: structure_fn(pyr, cfg.n_min)}
    try:
        c = cumulants(compute_leaders(pyr, cfg.gamma), 2, cfg.n_min)
        out["C_1"], out["C_2"] = c
    except BiscaleError:
        pass
    return out, pyr


def _estimates(name, lds, pyr, cfg, errors):
    rows = []
    lp = None
    for kind, ld in lds.items():
        for rng_name, rng in (("fs", cfg.fs), ("cs", cfg.cs)):
            param = _PARAMS[kind][rng_name]
            try:
                if cfg.bootstrap and pyr is not None:
                    source = pyr
                    if kind != LOG2_SD:
                        lp = lp or compute_leaders(pyr, cfg.gamma)
                        source = lp
                    est = bootstrap_ci(source, kind, *rng, resamples=cfg.bootstrap,
                                       seed=cfg.seed, confidence=cfg.confidence, ld=ld,
                                       parameter=param)
                else:
                    est = fit_scaling(ld, *rng, confidence=cfg.confidence, parameter=param)
            except BiscaleError as exc:
                errors.append({"stage": f"estimate/{name}/{kind}/{rng_name}", "error": str(exc)})
                continue
            row = {"ld": name, "range": rng_name}
            row.update(est.to_dict())
            rows.append(row)
    return rows


def run_analyze(cfg: AnalysisConfig, data=None) -> AnalysisReport:
    """Run the full pipeline.  ``data`` optionally supplies pre-loaded input
    as returned by :func:`load_input`."""
    fs = check_octave_range(cfg.fs, "fs")
    cs = check_octave_range(cfg.cs, "cs")
    cfg = replace(cfg, fs=fs, cs=cs)
    kind, payload = data if data is not None else load_input(cfg.input, cfg.format, cfg.lenient)
    errors = []
    packets = None
    if kind == "series":
        series = payload
        cfg = replace(cfg, delta0=series.delta0)
        m = 0
        if cfg.m:
            errors.append({"stage": "sketch", "error": "input is a binned series; sketching skipped"})
    else:
        packets = PacketArrays.from_records(payload) if not isinstance(payload, PacketArrays) \
            else payload
        series = aggregate(packets, cfg.delta0, label="global")
        m = cfg.m

    meta = {"version": __version__, "input": str(cfg.input), "sha256": _digest(cfg.input),
            "input_kind": kind, "delta0": series.delta0, "n_bins": len(series),
            "duration": series.duration, "total": series.total,
            "packets": len(packets) if packets is not None else None}
    if not cfg.no_timestamps:
        meta["created"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    global_lds, global_pyr = series_lds(series, cfg)
    report = AnalysisReport(meta=meta, config=cfg.to_dict(), errors=errors)
    report.lds["global"] = {k: v.to_dict() for k, v in global_lds.items()}
    report.estimates += _estimates("global", global_lds, global_pyr, cfg, errors)

    primary = global_lds
    if m:
        part = partition(packets, m, cfg.key, cfg.seed, cfg.delta0, n_bins=len(series))
        meta["sketch"] = part.meta()

        def one(sub):
            try:
                return series_lds(sub, cfg)[0]
            except BiscaleError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
            results = list(pool.map(one, part.subtraces))
        per_kind = {}
        for i, res in enumerate(results):
            if isinstance(res, Exception):
                errors.append({"stage": f"sketch{i:02d}", "error": str(res)})
                continue
            report.lds[f"sketch{i:02d}"] = {k: v.to_dict() for k, v in res.items()}
            for k, v in res.items():
                per_kind.setdefault(k, []).append(v)
        medians = {}
        for k, group in per_kind.items():
            try:
                medians[k] = median_ld(group, common=True)
            except (BiscaleError, ValueError) as exc:
                errors.append({"stage": f"median/{k}", "error": str(exc)})
        report.lds["median"] = {k: v.to_dict() for k, v in medians.items()}
        report.estimates += _estimates("median", medians, None, cfg, errors)
        if LOG2_SD in medians:
            primary = medians

    try:
        fr = find_frontier(primary[LOG2_SD], fs, cs)
        report.frontier = fr.to_dict()
        report.frontier["ld"] = "median" if primary is not global_lds else "global"
    except (BiscaleError, ValueError) as exc:
        errors.append({"stage": "frontier", "error": str(exc)})

    if packets is not None and cfg.tail:
        try:
            table = build_flows(packets, cfg.flow_timeout)
            report.tail = tail_index(table.sizes(), seed=cfg.seed).to_dict()
        except BiscaleError as exc:
            errors.append({"stage": "tail", "error": str(exc)})
    if packets is not None and cfg.rtt_classes:
        try:
            table = karn_rtt(payload if kind == "packets" else packets.records(), cfg.flow_timeout)
            report.rtt = rtt_partition(packets, table, cfg.rtt_classes, cfg.delta0,
                                       n_bins=len(series)).to_dict()
        except BiscaleError as exc:
            errors.append({"stage": "rtt", "error": str(exc)})
    return report


# --------------------------------------------------------------------------
# serialisation


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(report) -> str:
    """Canonical JSON: sorted keys, shortest round-trip float repr, no NaN."""
    d = report.to_dict() if hasattr(report, "to_dict") else report
    return json.dumps(_clean(d), sort_keys=True, indent=2, allow_nan=False) + "\n"


def flatten(obj, prefix=""):
    """``(path, type, value)`` rows that :func:`unflatten` inverts exactly."""
    rows = []
    if isinstance(obj, dict):
        if not obj:
            rows.append((prefix, "dict", ""))
        for k in sorted(obj):
            rows += flatten(obj[k], f"{prefix}/{_escape(k)}")
    elif isinstance(obj, list):
        if not obj:
            rows.append((prefix, "list", ""))
        for i, v in enumerate(obj):
            rows += flatten(v, f"{prefix}/#{i}")
    elif obj is None:
        rows.append((prefix, "null", ""))
    elif isinstance(obj, bool):
        rows.append((prefix, "bool", "true" if obj else "false"))
    elif isinstance(obj, int):
        rows.append((prefix, "int", str(obj)))
    elif isinstance(obj, float):
        rows.append((prefix, "float", repr(obj)))
    else:
        rows.append((prefix, "str", str(obj)))
    return rows


def _escape(k: str) -> str:
    return str(k).replace("~", "~0").replace("/", "~1").replace("#", "~2")


def _unescape(k: str) -> str:
    return k.replace("~2", "#").replace("~1", "/").replace("~0", "~")


def unflatten(rows):
    root = {"": None}

    def put(container, key, value):
        if isinstance(container, list):
            while len(container) <= key:
                container.append(None)
        container[key] = value

    for path, typ, raw in rows:
        value = {"dict": lambda: {}, "list": lambda: [], "null": lambda: None,
                 "bool": lambda: raw == "true", "int": lambda: int(raw),
                 "float": lambda: float(raw), "str": lambda: raw}[typ]()
        parts = [p for p in path.split("/")[1:]]
        keys = [int(p[1:]) if p.startswith("#") else _unescape(p) for p in parts]
        if not keys:
            return value
        node, key = root, ""
        for nxt in keys:
            if isinstance(node, list):
                cur = node[key] if key < len(node) else None
            else:
                cur = node.get(key)
            if cur is None:
                cur = [] if isinstance(nxt, int) else {}
                put(node, key, cur)
            node, key = cur, nxt
        put(node, key, value)
    return root[""]


def _ld_rows(ld: dict, confidence: float = DEFAULT_CONFIDENCE):
    from scipy import stats

    z = stats.norm.ppf(0.5 + confidence / 2.0)
    for o in ld["octaves"]:
        v = o["value"]
        s = math.sqrt(max(o["variance"], 0.0)) if o["variance"] is not None else 0.0
        yield o["j"], o["n_j"], v, o["variance"], v - z * s, v + z * s


def run_report(report: dict, fmt: str, out) -> list[str]:
    """Write ``report`` (a dict as produced by :func:`dumps`) as json, csv or
    gnuplot-data.  ``out`` is a file for json and a directory otherwise."""
    if fmt == "json":
        text = dumps(report)
        if out in (None, "-"):
            sys.stdout.write(text)
            return []
        with open(out, "w") as fh:
            fh.write(text)
        return [str(out)]
    if fmt not in ("csv", "gnuplot-data"):
        raise ValueError(f"unknown report format {fmt!r}")
    os.makedirs(out, exist_ok=True)
    written = []
    for source in sorted(report.get("lds", {})):
        for kind in sorted(report["lds"][source]):
            ld = report["lds"][source][kind]
            stem = os.path.join(out, f"ld_{source}_{_file_kind(kind)}")
            if fmt == "csv":
                path = stem + ".csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["j", "n_j", "value", "variance", "ci_low", "ci_high"])
                    for row in _ld_rows(ld):
                        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
            else:
                path = stem + ".dat"
                with open(path, "w") as fh:
                    fh.write(f"# {source} {kind}\n# j value ci_low ci_high\n")
                    for j, _, v, _, lo, hi in _ld_rows(ld):
                        fh.write(f"{j} {v!r} {lo!r} {hi!r}\n")
            written.append(path)
    fr = report.get("frontier")
    path = os.path.join(out, "frontier.csv" if fmt == "csv" else "frontier.dat")
    with open(path, "w") as fh:
        if fmt == "csv":
            fh.write("j_f,delta_f,verdict\n")
        else:
            fh.write("# j_f delta_f_seconds\n")
        if fr is not None and fr.get("j_f") is not None:
            if fmt == "csv":
                fh.write(f"{fr['j_f']!r},{fr['delta_f']!r},{fr['verdict']}\n")
            else:
                fh.write(f"{fr['j_f']!r} {fr['delta_f']!r}\n")
    written.append(path)
    if fmt == "csv":
        path = os.path.join(out, "report_flat.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "type", "value"])
            w.writerows(flatten(json.loads(dumps(report))))
        written.append(path)
    return written


def read_flat_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return unflatten([tuple(r) for r in rows[1:]])


def _file_kind(kind: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in kind).strip("_")
