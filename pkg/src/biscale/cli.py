"""``biscale`` command line."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from ._validation import check_octave_range, default_seed
from .aggregate import (
    BinnedSeries,
    aggregate,
    write_series,
    write_series_csv,
)
from .errors import BiscaleError
from .estimate import (
    DEFAULT_S,
    FRONTIER_Z,
    bootstrap_ci,
    coarsest_octave,
    find_frontier,
    fit_scaling,
    range_presets,
)
from .flows import (
    FLOW_TIMEOUT,
    RTT_CLASSES,
    TAIL_QUANTILES,
    build_flows,
    karn_rtt,
    partial_correlations,
    rtt_partition,
    tail_index,
)
from .ingest import PacketArrays, write_arrays_csv
from .leaders import DEFAULT_GAMMA, compute_leaders, cumulants, leader_structure_fn
from .logscale import LOG2_SD, LogscaleDiagram
from .pipeline import AnalysisConfig, dumps, load_input, run_analyze, run_report
from .sketch import DEFAULT_KEY, DEFAULT_M, KEYS, partition
from .synth import AnomalySpec, GeneratorSpec, gen_onoff, inject_anomaly, write_sidecar
from .wavelet import DEFAULT_WAVELET, N_MIN, dwt, structure_fn

_PRESET = range_presets("2007-2014", "trace15min")

# Built-in defaults; where a published choice exists the value follows it.
DEFAULTS = {
    "delta0_ms": 0.125,
    "m": DEFAULT_M,
    "key": DEFAULT_KEY,
    "s": DEFAULT_S,
    "fs": "%d:%d" % _PRESET["fs_range"],
    "cs": "%d:%d" % _PRESET["cs_range"],
    "wavelet": DEFAULT_WAVELET,
    "gamma": DEFAULT_GAMMA,
    "n_min": N_MIN,
    "bootstrap": 0,
    "p_max": 2,
    "jobs": 1,
    "qlo": TAIL_QUANTILES[0],
    "qhi": TAIL_QUANTILES[1],
    "classes": RTT_CLASSES,
    "flow_timeout": FLOW_TIMEOUT,
    "z_crit": FRONTIER_Z,
    "format": "json",
    "rtt_classes": 0,
    "vars": "jr,jm,jf,H,c1,c2",
}

EXIT_OK, EXIT_ERROR, EXIT_NO_CROSSING = 0, 1, 2


def _opt(parser, *flags, key, help, type=str, **kw):
    """Option whose default is resolved later (flag > config file > DEFAULTS)."""
    d = DEFAULTS.get(key)
    suffix = f" (default: {d})" if d is not None else ""
    parser.add_argument(*flags, dest=key, type=type, default=None, help=help + suffix, **kw)


def _common(p, seed=True):
    p.add_argument("--config", help="JSON file of option values (flags take precedence)")
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (default: $BISCALE_SEED or built-in)")


def _input(p, required=True):
    p.add_argument("--input", "-i", required=required,
                   help="pcap, packet CSV, series (.bin/.csv) or '-' for CSV on stdin")
    p.add_argument("--format", dest="input_format", choices=("pcap", "csv", "series"),
                   help="input format (default: sniffed)")
    p.add_argument("--lenient", action="store_true", help="skip malformed CSV rows")


def _delta0(p):
    _opt(p, "--delta0-ms", key="delta0_ms", type=float, help="bin width in milliseconds")


def _ranges(p):
    _opt(p, "--fs", key="fs", help="fine-scale octave range j1:j2")
    _opt(p, "--cs", key="cs", help="coarse-scale octave range j1:j2")
    p.add_argument("--era", choices=("2001-2006", "2007-2014"),
                   help="use the published range preset of an era")
    p.add_argument("--block", choices=("trace15min", "block6h"), default="trace15min",
                   help="analysis block for --era (default: trace15min)")


def _wavelet(p):
    _opt(p, "--wavelet", key="wavelet", help="haar or dbN")
    _opt(p, "--gamma", key="gamma", type=float, help="fractional integration order for leaders")
    _opt(p, "--n-min", key="n_min", type=int, help="minimum coefficients per octave")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biscale", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="bin a packet trace into a count series")
    _input(p)
    _common(p, seed=False)
    _delta0(p)
    p.add_argument("--drop-partial", action="store_true", help="drop a trailing partial bin")
    p.add_argument("--out", "-o", required=True, help="output series (.bin or .csv)")

    p = sub.add_parser("sketch", help="split a trace into 2^M hashed sub-traces")
    _input(p)
    _common(p)
    _delta0(p)
    _opt(p, "--m", key="m", type=int, help="number of hash bits")
    _opt(p, "--key", key="key", help="hash key: " + "|".join(KEYS))
    p.add_argument("--out-dir", required=True, help="directory for sub-trace series")

    p = sub.add_parser("ld", help="logscale diagrams of a trace or series")
    _input(p)
    _common(p, seed=False)
    _delta0(p)
    _wavelet(p)
    p.add_argument("--kind", choices=("sd", "cumulants", "sl", "all"), default="all",
                   help="which diagrams (default: all)")
    _opt(p, "--p-max", key="p_max", type=int, help="highest cumulant order")
    p.add_argument("--q", type=float, action="append", help="moment order for --kind sl")
    p.add_argument("--out", "-o", default="-", help="output JSON (default: stdout)")

    p = sub.add_parser("estimate", help="fit scaling parameters over FS/CS ranges")
    _input(p)
    _common(p)
    _delta0(p)
    _wavelet(p)
    _ranges(p)
    _opt(p, "--bootstrap", key="bootstrap", type=int,
         help="bootstrap resamples (0: regression CI; LD JSON input always uses regression)")
    p.add_argument("--out", "-o", default="-", help="output JSON (default: stdout)")

    p = sub.add_parser("frontier", help="locate the FS/CS frontier octave")
    _input(p)
    _common(p, seed=False)
    _delta0(p)
    _wavelet(p)
    _ranges(p)
    _opt(p, "--z-crit", key="z_crit", type=float,
         help="slope-difference z score below which the LD is monoscaling")
    p.add_argument("--require-biscaling", action="store_true", help="exit 2 when no frontier")
    p.add_argument("--out", "-o", default="-", help="output JSON (default: stdout)")

    p = sub.add_parser("tail", help="flow-size tail index")
    _input(p)
    _common(p)
    _opt(p, "--qlo", key="qlo", type=float, help="lower tail quantile")
    _opt(p, "--qhi", key="qhi", type=float, help="upper tail quantile")
    _opt(p, "--flow-timeout", key="flow_timeout", type=float, help="idle timeout (s)")
    p.add_argument("--sizes-column", help="read sizes from this column of a CSV table instead")
    p.add_argument("--flows-out", help="write the flow table as CSV")
    p.add_argument("--out", "-o", default="-", help="output JSON (default: stdout)")

    p = sub.add_parser("rtt", help="Karn RTT samples and RTT classes")
    _input(p)
    _common(p, seed=False)
    _delta0(p)
    _opt(p, "--classes", key="classes", type=int, help="number of RTT classes")
    _opt(p, "--flow-timeout", key="flow_timeout", type=float, help="idle timeout (s)")
    p.add_argument("--min-flows-per-class", type=int, default=100,
                   help="minimum RTT-bearing flows per class (default: 100)")
    p.add_argument("--flows-out", help="write the flow table as CSV")
    p.add_argument("--out", "-o", default="-", help="output JSON (default: stdout)")

    p = sub.add_parser("corr", help="direct and partial correlations of table columns")
    p.add_argument("--input", "-i", required=True, help="CSV table with a header row")
    _common(p, seed=False)
    _opt(p, "--vars", key="vars", help="comma-separated column names")
    p.add_argument("--out", "-o", default="-", help="output JSON (default: stdout)")

    p = sub.add_parser("synth", help="synthetic series with known scaling")
    gens = p.add_subparsers(dest="generator", required=True)
    g = gens.add_parser("fgn", help="fractional Gaussian noise")
    g.add_argument("--h", type=float, default=0.8)
    g.add_argument("--n", type=int, default=2 ** 20)
    g = gens.add_parser("cascade", help="log-normal wavelet cascade")
    g.add_argument("--c1", type=float, default=0.64)
    g.add_argument("--c2", type=float, default=-0.044)
    g.add_argument("--depth", type=int, default=20)
    g = gens.add_parser("biscaling", help="cascade below the frontier, fGn above")
    g.add_argument("--j-frontier", type=int, default=10)
    g.add_argument("--c1", type=float, default=0.64)
    g.add_argument("--c2", type=float, default=-0.044)
    g.add_argument("--h", type=float, default=0.9)
    g.add_argument("--depth", type=int, default=20)
    g = gens.add_parser("poisson", help="homogeneous Poisson counts")
    g.add_argument("--rate", type=float, default=1000.0)
    g.add_argument("--duration", type=float, default=60.0)
    for name in ("onoff", "anomaly"):
        g = gens.add_parser(name, help="heavy-tailed On/Off superposition"
                            + (" plus periodic single-source bursts" if name == "anomaly" else ""))
        g.add_argument("--alpha", type=float, default=1.5)
        g.add_argument("--n-sources", type=int, default=500)
        g.add_argument("--mean-on", type=float, default=0.01)
        g.add_argument("--mean-off", type=float, default=0.2)
        g.add_argument("--rate-on", type=float, default=100.0)
        g.add_argument("--duration", type=float, default=900.0)
        g.add_argument("--packets", action="store_true",
                       help="write a packet CSV instead of a binned series")
        if name == "anomaly":
            g.add_argument("--period", type=float, default=3.0)
            g.add_argument("--fraction", type=float, default=0.3)
    for g in gens.choices.values():
        _common(g)
        g.add_argument("--delta0-ms", type=float, default=1.0,
                       help="bin width in milliseconds (default: 1.0)")
        g.add_argument("--out", "-o", default="-",
                       help="output (.bin series, .csv series/packets, '-' for CSV on stdout)")
        g.add_argument("--no-sidecar", action="store_true", help="skip the ground-truth JSON")

    p = sub.add_parser("analyze", help="full pipeline with a JSON report")
    _input(p)
    _common(p)
    _delta0(p)
    _wavelet(p)
    _ranges(p)
    _opt(p, "--m", key="m", type=int, help="hash bits (0 disables sketching)")
    _opt(p, "--key", key="key", help="hash key: " + "|".join(KEYS))
    _opt(p, "--bootstrap", key="bootstrap", type=int,
         help="bootstrap resamples for global estimates (0: regression CIs)")
    _opt(p, "--jobs", key="jobs", type=int, help="concurrent sub-trace analyses")
    p.add_argument("--tail", action="store_true", help="add the flow-size tail estimate")
    _opt(p, "--rtt-classes", key="rtt_classes", type=int, help="RTT classes (0 disables)")
    _opt(p, "--flow-timeout", key="flow_timeout", type=float, help="idle timeout (s)")
    p.add_argument("--require-biscaling", action="store_true", help="exit 2 when no frontier")
    p.add_argument("--no-timestamps", action="store_true", help="omit wall-clock metadata")
    p.add_argument("--out", "-o", default="-", help="output JSON (default: stdout)")

    p = sub.add_parser("report", help="convert an analysis report")
    p.add_argument("--input", "-i", required=True, help="report JSON")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--to", dest="report_format", choices=("json", "csv", "gnuplot-data"),
                   default="json", help="output format (default: json)")
    p.add_argument("--out", "-o", default="-", help="file (json) or directory (csv, gnuplot-data)")
    return parser


def resolve(args) -> argparse.Namespace:
    """Fill unset options from ``--config`` then from :data:`DEFAULTS`."""
    config = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise ValueError("--config must hold a JSON object")
    for k, v in vars(args).items():
        if v is None:
            alt = k.replace("_", "-")
            if k in config:
                setattr(args, k, config[k])
            elif alt in config:
                setattr(args, k, config[alt])
            elif k in DEFAULTS:
                setattr(args, k, DEFAULTS[k])
    for flag in ("lenient", "tail", "require_biscaling", "no_timestamps", "drop_partial"):
        if hasattr(args, flag) and not getattr(args, flag) and config.get(flag):
            setattr(args, flag, True)
    if getattr(args, "seed", "absent") is None:
        args.seed = default_seed()
    if getattr(args, "era", None):
        preset = range_presets(args.era, args.block)
        if "fs" not in config and not _given("--fs"):
            args.fs = "%d:%d" % preset["fs_range"]
        if "cs" not in config and not _given("--cs"):
            args.cs = "%d:%d" % preset["cs_range"]
    return args


_ARGV: list = []


def _given(flag: str) -> bool:
    return any(a == flag or a.startswith(flag + "=") for a in _ARGV)


# --------------------------------------------------------------------------
# helpers


def _emit(obj, out):
    text = dumps(obj)
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _series_from(args):
    kind, payload = load_input(args.input, args.input_format, args.lenient)
    if kind == "series":
        return payload, None
    packets = PacketArrays.from_records(payload)
    return aggregate(packets, args.delta0_ms * 1e-3, label=str(args.input)), payload


def _write_series(series: BinnedSeries, out):
    if out in (None, "-"):
        write_series_csv(sys.stdout, series)
    elif str(out).lower().endswith(".csv"):
        write_series_csv(out, series)
    else:
        write_series(out, series)


def _flows_csv(table, path):
    rows = table.to_rows()
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["src_ip"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# --------------------------------------------------------------------------
# commands


def cmd_aggregate(args):
    kind, payload = load_input(args.input, args.input_format, args.lenient)
    if kind == "series":
        raise ValueError("input is already a binned series")
    series = aggregate(PacketArrays.from_records(payload), args.delta0_ms * 1e-3,
                       label=str(args.input), drop_partial=args.drop_partial)
    _write_series(series, args.out)
    return EXIT_OK


def cmd_sketch(args):
    kind, payload = load_input(args.input, args.input_format, args.lenient)
    if kind == "series":
        raise ValueError("sketching needs a packet trace, not a binned series")
    packets = PacketArrays.from_records(payload)
    part = partition(packets, args.m, args.key, args.seed, args.delta0_ms * 1e-3)
    os.makedirs(args.out_dir, exist_ok=True)
    files = []
    for i, s in enumerate(part.subtraces):
        path = os.path.join(args.out_dir, f"sketch{i:02d}.bin")
        write_series(path, s)
        files.append(os.path.basename(path))
    meta = dict(part.meta(), delta0=args.delta0_ms * 1e-3, files=files)
    with open(os.path.join(args.out_dir, "sketch.json"), "w") as fh:
        fh.write(dumps(meta))
    return EXIT_OK


def _lds(series, args, kind="all"):
    pyr = dwt(series, args.wavelet)
    out = {}
    if kind in ("sd", "all"):
        out[LOG2_SD] = structure_fn(pyr, args.n_min)
    if kind in ("cumulants", "sl", "all"):
        lp = compute_leaders(pyr, args.gamma)
        if kind in ("cumulants", "all"):
            for ld in cumulants(lp, getattr(args, "p_max", 2), args.n_min):
                out[ld.kind] = ld
        if kind == "sl":
            for q in args.q or [1.0, 2.0, 3.0]:
                ld = leader_structure_fn(lp, q, args.n_min)
                out[ld.kind] = ld
    return out, pyr


def cmd_ld(args):
    series, _ = _series_from(args)
    lds, _ = _lds(series, args, args.kind)
    _emit({"lds": {k: v.to_dict() for k, v in lds.items()}}, args.out)
    return EXIT_OK


def _load_ld_json(path):
    with open(path) as fh:
        d = json.load(fh)
    if "lds" in d and isinstance(d["lds"], dict):
        lds = d["lds"]
        if "median" in lds or "global" in lds:
            lds = lds.get("median") or lds["global"]
        return {k: LogscaleDiagram.from_dict(v) for k, v in lds.items()}
    if "octaves" in d:
        return {d["kind"]: LogscaleDiagram.from_dict(d)}
    raise ValueError(f"{path}: no logscale diagram found")


def _is_json(path):
    return str(path).lower().endswith(".json")


def cmd_estimate(args):
    fs, cs = check_octave_range(args.fs, "fs"), check_octave_range(args.cs, "cs")
    pyr = None
    if _is_json(args.input):
        lds = _load_ld_json(args.input)
    else:
        series, _ = _series_from(args)
        lds, pyr = _lds(series, args)
    names = {LOG2_SD: ("h", "H"), "C_1": ("c1", "c1"), "C_2": ("c2", "c2"),
             "C_3": ("c3", "c3")}
    rows, errors = [], []
    lp = None
    for kind, ld in lds.items():
        for rng_name, rng, pname in (("fs", fs, names.get(kind, (None,))[0]),
                                     ("cs", cs, names.get(kind, (None, None))[1])):
            try:
                if pyr is not None and args.bootstrap:
                    source = pyr
                    if kind != LOG2_SD:
                        lp = lp or compute_leaders(pyr, args.gamma)
                        source = lp
                    est = bootstrap_ci(source, kind, *rng, resamples=args.bootstrap,
                                       seed=args.seed, ld=ld, parameter=pname)
                else:
                    est = fit_scaling(ld, *rng, parameter=pname)
            except BiscaleError as exc:
                errors.append({"kind": kind, "range": rng_name, "error": str(exc)})
                continue
            rows.append(dict(est.to_dict(), range=rng_name))
    _emit({"estimates": rows, "errors": errors, "fs": list(fs), "cs": list(cs),
           "seed": args.seed}, args.out)
    return EXIT_OK if rows else EXIT_ERROR


def cmd_frontier(args):
    fs, cs = check_octave_range(args.fs, "fs"), check_octave_range(args.cs, "cs")
    if _is_json(args.input):
        ld = _load_ld_json(args.input)[LOG2_SD]
    else:
        series, _ = _series_from(args)
        ld = structure_fn(dwt(series, args.wavelet), args.n_min)
    report = find_frontier(ld, fs, cs, z_crit=args.z_crit)
    out = report.to_dict()
    out["coarsest_octave"] = coarsest_octave(max(ld.octaves), DEFAULTS["s"])
    _emit(out, args.out)
    if args.require_biscaling and not report.biscaling:
        print("no frontier: LD is monoscaling over the given ranges", file=sys.stderr)
        return EXIT_NO_CROSSING
    return EXIT_OK


def cmd_tail(args):
    if args.sizes_column:
        with open(args.input, newline="") as fh:
            sizes = [float(r[args.sizes_column]) for r in csv.DictReader(fh)]
        table = None
    else:
        kind, payload = load_input(args.input, args.input_format, args.lenient)
        if kind == "series":
            raise ValueError("tail needs a packet trace or --sizes-column")
        table = build_flows(PacketArrays.from_records(payload), args.flow_timeout)
        sizes = table.sizes()
    est = tail_index(sizes, args.qlo, args.qhi, seed=args.seed)
    if args.flows_out and table is not None:
        _flows_csv(table, args.flows_out)
    _emit(dict(est.to_dict(), seed=args.seed), args.out)
    return EXIT_OK


def cmd_rtt(args):
    kind, payload = load_input(args.input, args.input_format, args.lenient)
    if kind == "series":
        raise ValueError("rtt needs a packet trace")
    table = karn_rtt(payload, args.flow_timeout)
    if args.flows_out:
        _flows_csv(table, args.flows_out)
    med = table.rtt_medians()
    out = {"flows": len(table), "rtt_flows": int(np.sum(~np.isnan(med)))}
    out["classes"] = rtt_partition(PacketArrays.from_records(payload), table, args.classes,
                                   args.delta0_ms * 1e-3, args.min_flows_per_class).to_dict()
    _emit(out, args.out)
    return EXIT_OK


def cmd_corr(args):
    names = [v.strip() for v in args.vars.split(",") if v.strip()]
    with open(args.input, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = [n for n in names if rows and n not in rows[0]]
    if missing:
        raise ValueError(f"columns not found: {', '.join(missing)}")
    data = np.array([[float(r[n]) for r in rows] for n in names])
    _emit(partial_correlations(data, names).to_dict(), args.out)
    return EXIT_OK


def cmd_synth(args):
    g = args.generator
    delta0 = args.delta0_ms * 1e-3
    if g == "fgn":
        spec = GeneratorSpec("fgn", {"h": args.h, "n": args.n}, args.seed)
    elif g == "cascade":
        spec = GeneratorSpec("cascade", {"c1": args.c1, "c2": args.c2, "depth": args.depth},
                             args.seed)
    elif g == "biscaling":
        spec = GeneratorSpec("biscaling", {"j_frontier": args.j_frontier, "c1": args.c1,
                                           "c2": args.c2, "h": args.h, "depth": args.depth},
                             args.seed)
    elif g == "poisson":
        spec = GeneratorSpec("poisson", {"rate": args.rate, "duration": args.duration,
                                         "delta0": delta0}, args.seed)
    else:
        params = {"alpha": args.alpha, "n_sources": args.n_sources, "mean_on": args.mean_on,
                  "mean_off": args.mean_off, "rate_on": args.rate_on,
                  "duration": args.duration, "delta0": delta0}
        if g == "anomaly":
            params.update(period=args.period, fraction=args.fraction)
        spec = GeneratorSpec(g, params, args.seed)
        if args.packets:
            return _synth_packets(spec, args)
    if "delta0" not in spec.params:
        spec = GeneratorSpec(spec.kind, dict(spec.params, delta0=delta0), spec.seed)
    series = spec.generate()
    _write_series(series, args.out)
    if not args.no_sidecar and args.out not in (None, "-"):
        write_sidecar(args.out, spec)
    return EXIT_OK


def _synth_packets(spec, args):
    from ._validation import as_generator

    p = spec.params
    rng = as_generator(spec.seed)
    res = gen_onoff(p["alpha"], p["n_sources"], p["mean_on"], p["mean_off"], p["rate_on"],
                    p["duration"], p["delta0"], seed=rng, packets=True)
    packets = res.packets
    if spec.kind == "anomaly":
        packets = inject_anomaly(packets, AnomalySpec(period=p["period"], fraction=p["fraction"]),
                                 duration=p["duration"], seed=rng)
    if args.out in (None, "-"):
        write_arrays_csv(sys.stdout, packets)
    else:
        write_arrays_csv(args.out, packets)
        if not args.no_sidecar:
            write_sidecar(args.out, spec)
    return EXIT_OK


def cmd_analyze(args):
    cfg = AnalysisConfig(
        input=args.input, format=args.input_format, delta0=args.delta0_ms * 1e-3, m=args.m,
        key=args.key, seed=args.seed, fs=check_octave_range(args.fs, "fs"),
        cs=check_octave_range(args.cs, "cs"), wavelet=args.wavelet, gamma=args.gamma,
        n_min=args.n_min, bootstrap=args.bootstrap, jobs=args.jobs, tail=args.tail,
        rtt_classes=args.rtt_classes, flow_timeout=args.flow_timeout, lenient=args.lenient,
        no_timestamps=args.no_timestamps,
    )
    report = run_analyze(cfg)
    _emit(report, args.out)
    if args.require_biscaling and not report.biscaling:
        print("no frontier: LD is monoscaling over the given ranges", file=sys.stderr)
        return EXIT_NO_CROSSING
    return EXIT_OK


def cmd_report(args):
    with open(args.input) as fh:
        report = json.load(fh)
    out = args.out
    if args.report_format != "json" and out in (None, "-"):
        raise ValueError("csv and gnuplot-data need --out DIRECTORY")
    for path in run_report(report, args.report_format, out):
        print(path, file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "aggregate": cmd_aggregate, "sketch": cmd_sketch, "ld": cmd_ld, "estimate": cmd_estimate,
    "frontier": cmd_frontier, "tail": cmd_tail, "rtt": cmd_rtt, "corr": cmd_corr,
    "synth": cmd_synth, "analyze": cmd_analyze, "report": cmd_report,
}


def main(argv=None) -> int:
    global _ARGV
    argv = list(sys.argv[1:] if argv is None else argv)
    _ARGV = argv
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = resolve(args)
        return COMMANDS[args.command](args)
    except (BiscaleError, ValueError, OSError, KeyError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing {exc}"
        print(f"biscale {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
