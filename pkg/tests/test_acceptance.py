"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the criterion lines are
printed in the terminal summary (and immediately, uncaptured).  Criteria 1,
2, 3 and 5 are Monte-Carlo studies over 100 seeds and take several minutes.
``BISCALE_ACCEPT_SEEDS`` lowers the seed count for a quick smoke run (the
pass thresholds scale with it).  Criterion 10 runs only when
``BISCALE_MAWI_TRACE`` names a 15-minute trace.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from biscale import cli
from biscale.aggregate import aggregate
from biscale.estimate import bootstrap_ci, find_frontier, fit_scaling
from biscale.flows import karn_samples, partial_correlations
from biscale.leaders import compute_leaders, cumulants
from biscale.pipeline import AnalysisConfig, dumps, run_analyze
from biscale.sketch import median_ld, partition
from biscale.synth import (
    AnomalySpec,
    gen_biscaling,
    gen_cascade,
    gen_fgn,
    gen_onoff,
    gen_poisson,
    inject_anomaly,
)
from biscale.wavelet import WaveletPyramid, dwt, structure_fn

from conftest import ACCEPTANCE_LINES, ANALYZE_ARGS
from karn_fixtures import FIXTURES
from oracles import leaders_bruteforce, partial_by_residuals

SEEDS = int(os.environ.get("BISCALE_ACCEPT_SEEDS", "100"))
RESAMPLES = 199
FGN_RANGE = (6, 15)
FGN_HS = (0.6, 0.8, 0.9)
FS, CS = (4, 8), (12, 16)

pytestmark = pytest.mark.slow


def need(fraction):
    """Pass count required out of SEEDS runs for a ``fraction`` threshold."""
    return math.ceil(fraction * SEEDS - 1e-9)


def allow(fraction):
    return math.floor(fraction * SEEDS + 1e-9)


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()
    assert ok, line


@pytest.fixture(scope="module")
def fgn_runs():
    """fGn fixtures shared by criteria 1, 3 and 5."""
    runs = {}
    for h in FGN_HS:
        rows = []
        for seed in range(SEEDS):
            t0 = time.perf_counter()
            x = gen_fgn(h, 2 ** 20, seed=seed)
            pyr = dwt(x)
            ld = structure_fn(pyr)
            est_h = bootstrap_ci(pyr, "log2_Sd", *FGN_RANGE, RESAMPLES, seed=seed, ld=ld)
            lp = compute_leaders(pyr)
            c2 = cumulants(lp, 2)[1]
            est_c2 = bootstrap_ci(lp, "C_2", *FGN_RANGE, RESAMPLES, seed=seed, ld=c2)
            frontier = find_frontier(ld, FS, CS)
            rows.append({"h": est_h, "c2": est_c2, "frontier": frontier,
                         "seconds": time.perf_counter() - t0})
        runs[h] = rows
    return runs


def test_criterion_1_fgn_round_trip(fgn_runs):
    parts, ok = [], True
    slowest = 0.0
    for h, rows in fgn_runs.items():
        cov_h = sum(r["h"].covers(h) for r in rows)
        cov_c2 = sum(r["c2"].covers(0.0) for r in rows)
        slowest = max(slowest, max(r["seconds"] for r in rows))
        ok &= cov_h >= need(0.85) and cov_c2 >= need(0.85)
        parts.append(f"H={h}: H covered {cov_h}/{SEEDS}, c2 covers 0 {cov_c2}/{SEEDS}")
    ok &= slowest < 60
    record(1, ok, "; ".join(parts) + f" (need >= {need(0.85)}); slowest run {slowest:.1f}s")


ONOFF = dict(n_sources=500, mean_on=0.01, mean_off=0.2, rate_on=1000.0, duration=1800.0,
             delta0=1e-3)
ONOFF_RANGE = (8, 16)


def test_criterion_2_heavy_tail_law():
    parts, ok = [], True
    for alpha in (1.19, 1.5, 1.8):
        target = (3 - alpha) / 2
        hs = []
        for seed in range(SEEDS):
            res = gen_onoff(alpha, seed=seed, **ONOFF)
            hs.append(fit_scaling(structure_fn(dwt(res.series)), *ONOFF_RANGE).value)
        hs = np.array(hs)
        hits = int(np.sum(np.abs(hs - target) <= 0.07))
        ok &= hits >= need(0.80)
        parts.append(f"alpha={alpha} target {target:.3f}: {hits}/{SEEDS} within 0.07 "
                     f"(mean H {hs.mean():.3f})")
    record(2, ok, "; ".join(parts) + f" (need >= {need(0.80)})")


def test_criterion_3_multifractal_discrimination(fgn_runs):
    hits = 0
    c2s = []
    for seed in range(SEEDS):
        x = gen_cascade(0.64, -0.044, 20, seed=seed)
        lp = compute_leaders(dwt(x))
        c2 = cumulants(lp, 2)[1]
        est = bootstrap_ci(lp, "C_2", *FGN_RANGE, RESAMPLES, seed=seed, ld=c2)
        c2s.append(est.value)
        # the CI must exclude 0 and reach the band -0.044 +- 0.02
        hits += (not est.covers(0.0)) and est.ci_low <= -0.024 and est.ci_high >= -0.064
    false = {h: sum(not r["c2"].covers(0.0) for r in rows) for h, rows in fgn_runs.items()}
    ok = hits >= need(0.80) and all(v <= allow(0.10) for v in false.values())
    record(3, ok, f"cascade: {hits}/{SEEDS} CIs exclude 0 and meet -0.044+-0.02 "
                  f"(need >= {need(0.80)}, mean c2 {np.mean(c2s):.4f}); fGn CIs excluding 0: "
           + ", ".join(f"H={h} {v}/{SEEDS}" for h, v in false.items())
           + f" (allow <= {allow(0.10)})")


SKETCH = dict(n_sources=500, mean_on=0.01, mean_off=0.2, rate_on=100.0, duration=900.0,
              delta0=1e-3)
SKETCH_RANGE = (8, 15)


def test_criterion_4_sketch_robustness():
    hits, worst_med, best_glob = 0, 0.0, math.inf
    for seed in range(SEEDS):
        res = gen_onoff(1.5, seed=seed, packets=True, **SKETCH)
        n_bins = len(res.series)
        h_base = fit_scaling(structure_fn(dwt(res.series)), *SKETCH_RANGE).value
        mixed = inject_anomaly(res.packets, AnomalySpec(), duration=SKETCH["duration"],
                               seed=seed)
        glob = aggregate(mixed, SKETCH["delta0"], n_bins=n_bins)
        h_glob = fit_scaling(structure_fn(dwt(glob)), *SKETCH_RANGE).value
        part = partition(mixed, 4, "src", seed=seed, delta0=SKETCH["delta0"], n_bins=n_bins)
        med = median_ld([structure_fn(dwt(s)) for s in part.subtraces])
        # MAD variances can vanish at coarse octaves; floor them for the weights
        med = med.replace(variance=np.maximum(med.variance, 1e-6))
        h_med = fit_scaling(med, *SKETCH_RANGE).value
        d_med, d_glob = abs(h_med - h_base), abs(h_glob - h_base)
        worst_med, best_glob = max(worst_med, d_med), min(best_glob, d_glob)
        hits += d_med <= 0.03 and d_glob >= 0.10
    record(4, hits >= need(0.90),
           f"{hits}/{SEEDS} seeds with |median-LD H - background H| <= 0.03 and "
           f"|global-LD H - background H| >= 0.10 (need >= {need(0.90)}; worst median gap "
           f"{worst_med:.3f}, smallest global gap {best_glob:.3f})")


def test_criterion_5_frontier(fgn_runs):
    j_f = []
    for seed in range(SEEDS):
        rep = find_frontier(structure_fn(dwt(gen_biscaling(10, seed=seed))), FS, CS)
        j_f.append(np.nan if rep.j_f is None else rep.j_f)
    j_f = np.array(j_f)
    near = int(np.sum(np.abs(j_f - 10) <= 1))
    quiet = {f"fGn H={h}": sum(r["frontier"].j_f is None for r in rows)
             for h, rows in fgn_runs.items()}
    poisson = 0
    for seed in range(SEEDS):
        s = gen_poisson(1000.0, 2 ** 20 * 1e-3, 1e-3, seed=seed)
        poisson += find_frontier(structure_fn(dwt(s)), FS, CS).j_f is None
    quiet["Poisson"] = poisson
    ok = near >= need(0.90) and all(v >= need(0.95) for v in quiet.values())
    record(5, ok, f"biscaling: {near}/{SEEDS} within 10+-1 (need >= {need(0.90)}, "
                  f"median j_f {np.nanmedian(j_f):.2f}); no crossing: "
           + ", ".join(f"{k} {v}/{SEEDS}" for k, v in quiet.items())
           + f" (need >= {need(0.95)})")


def random_pyramid(rng):
    n = int(rng.integers(8, 2 ** 10 + 1))
    if rng.random() < 0.5:
        wavelet = ["haar", "db2", "db3", "db4"][rng.integers(4)]
        x = rng.standard_normal(n) if rng.random() < 0.5 else rng.poisson(3, n).astype(float)
        try:
            return dwt(x, wavelet)
        except Exception:
            return None
    # arbitrary coefficients with ties and zeros, halving lengths
    octs, m, j = {}, n // 2, 1
    while m >= 1:
        octs[j] = rng.integers(-3, 4, m).astype(float)
        m //= 2
        j += 1
    return WaveletPyramid("haar", octs)


def test_criterion_6_leaders_exact():
    rng = np.random.default_rng(6)
    checked = mismatched = 0
    while checked < 1000:
        pyr = random_pyramid(rng)
        if pyr is None or len(pyr.js) < 2:
            continue
        gamma = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
        lp = compute_leaders(pyr, gamma)
        ref = leaders_bruteforce(pyr.octaves, gamma)
        mismatched += any(not np.array_equal(lp[j], ref[j]) for j in pyr.js)
        checked += 1
    record(6, mismatched == 0,
           f"{checked - mismatched}/{checked} random pyramids bit-identical to the exhaustive sup")


def test_criterion_7_karn():
    bad = []
    n_samples = 0
    for name, make in FIXTURES.items():
        recs, expected = make()
        got = [(t, rtt) for _, t, rtt in karn_samples(recs)]
        n_samples += len(got)
        if got != expected:
            bad.append(name)
        first_sent = {}
        for r in recs:
            m = r.tcp_meta
            if m.payload_len:
                first_sent.setdefault((r.flow_key.src_ip, m.seq), []).append(r.timestamp)
        retx = {t for times in first_sent.values() if len(times) > 1 for t in times}
        if any(t in retx for t, _ in got):
            bad.append(name + " (retransmission sampled)")
    record(7, not bad, f"{len(FIXTURES) - len(set(bad))}/{len(FIXTURES)} scripted fixtures "
                       f"exact ({n_samples} samples)" + (f"; failing: {bad}" if bad else ""))


def test_criterion_8_partial_correlations():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(500):
        p = int(rng.integers(4, 7))
        n = int(rng.integers(p + 10, 400))
        x = rng.standard_normal((p, p)) @ rng.standard_normal((p, n))
        worst = max(worst, float(np.max(np.abs(partial_correlations(x).partial
                                                - partial_by_residuals(x)))))
    record(8, worst < 1e-10, f"500 fixtures of 4-6 variables, max |difference| {worst:.2e}")


def test_criterion_9_determinism(onoff_trace, tmp_path):
    outs = []
    for jobs in ("1", "4", "1"):
        out = tmp_path / f"r{len(outs)}.json"
        assert cli.main(["analyze", "-i", str(onoff_trace), *ANALYZE_ARGS, "--seed", "9",
                         "--jobs", jobs, "-o", str(out)]) == 0
        outs.append(out.read_bytes())
    sub = subprocess.run([sys.executable, "-m", "biscale.cli", "analyze", "-i", str(onoff_trace),
                          *ANALYZE_ARGS, "--seed", "9", "--jobs", "2"],
                         capture_output=True, check=True)
    outs.append(sub.stdout)
    same = all(o == outs[0] for o in outs)
    record(9, same, f"{len(outs)} reports (jobs 1, 4, 1 and a separate process with jobs 2) "
                    f"{'byte-identical' if same else 'differ'}, {len(outs[0])} bytes")


@pytest.mark.skipif(not os.environ.get("BISCALE_MAWI_TRACE"),
                    reason="optional: set BISCALE_MAWI_TRACE to a 15-minute pcap")
def test_criterion_10_real_trace():
    t0 = time.perf_counter()
    report = json.loads(dumps(run_analyze(AnalysisConfig(input=os.environ["BISCALE_MAWI_TRACE"],
                                                         no_timestamps=True, jobs=4))))
    took = time.perf_counter() - t0
    fr = report.get("frontier") or {}
    j_f = fr.get("j_f")
    h = [e["value"] for e in report["estimates"]
         if e["ld"] == "median" and e["parameter"] == "H" and e["range"] == "cs"]
    ok = took < 300 and j_f is not None and 9 <= j_f <= 14 and h and 0.75 <= h[0] <= 1.05
    record(10, ok, f"{took:.0f}s, j_f {j_f}, CS H {h[0] if h else None}")
