import json

import numpy as np
import pytest

from biscale.aggregate import write_series
from biscale.pipeline import (
    AnalysisConfig,
    dumps,
    flatten,
    load_input,
    read_flat_csv,
    run_analyze,
    run_report,
    unflatten,
)
from biscale.synth import GeneratorSpec


def config(path, **kw):
    base = dict(input=str(path), delta0=1e-3, fs=(3, 7), cs=(9, 13), no_timestamps=True)
    base.update(kw)
    return AnalysisConfig(**base)


@pytest.fixture(scope="module")
def report(onoff_trace):
    return run_analyze(config(onoff_trace))


def test_sketched_report(report):
    d = json.loads(dumps(report))
    sketches = [k for k in d["lds"] if k.startswith("sketch")]
    assert len(sketches) == 16
    assert "median" in d["lds"] and "global" in d["lds"]
    assert {"log2_Sd", "C_1", "C_2"} <= set(d["lds"]["median"])
    lds = {(e["ld"], e["parameter"], e["range"]) for e in d["estimates"]}
    assert ("median", "H", "cs") in lds and ("global", "H", "cs") in lds
    assert d["meta"]["sketch"]["m"] == 4
    assert "created" not in d["meta"]
    assert d["frontier"]["ld"] == "median"


def test_no_sketch(onoff_trace):
    d = json.loads(dumps(run_analyze(config(onoff_trace, m=0))))
    assert set(d["lds"]) == {"global"}
    assert d["frontier"]["ld"] == "global"


def test_timestamps_included_by_default(onoff_trace):
    d = run_analyze(config(onoff_trace, m=0, no_timestamps=False)).to_dict()
    assert "created" in d["meta"]


@pytest.mark.parametrize("jobs", [1, 4])
def test_deterministic_across_jobs(onoff_trace, report, jobs):
    assert dumps(run_analyze(config(onoff_trace, jobs=jobs))) == dumps(report)


def test_series_input_skips_sketch(tmp_path):
    s = GeneratorSpec("fgn", {"h": 0.8, "n": 2 ** 16}, seed=1).generate()
    path = tmp_path / "fgn.bin"
    write_series(path, s)
    assert load_input(str(path))[0] == "series"
    d = run_analyze(config(path, fs=(2, 5), cs=(7, 11))).to_dict()
    assert set(d["lds"]) == {"global"}
    assert any(e["stage"] == "sketch" for e in d["errors"])
    h = [e for e in d["estimates"] if e["parameter"] == "H" and e["range"] == "cs"][0]
    assert h["ci_low"] - 0.05 <= 0.8 <= h["ci_high"] + 0.05


def test_missing_range_is_recorded(onoff_trace):
    d = run_analyze(config(onoff_trace, m=0, cs=(12, 20))).to_dict()
    assert any("frontier" == e["stage"] for e in d["errors"])


def test_json_csv_json_round_trip(report, tmp_path):
    original = json.loads(dumps(report))
    run_report(original, "csv", tmp_path)
    back = read_flat_csv(tmp_path / "report_flat.csv")
    assert back == original
    assert dumps(back) == dumps(original)


def test_flatten_edge_cases():
    obj = {"a/b": [1, 2.5, None, True, "x#y"], "e": {}, "l": [], "~": 0.1 + 0.2}
    assert unflatten(flatten(obj)) == obj


def test_gnuplot_four_columns(report, tmp_path):
    d = json.loads(dumps(report))
    files = run_report(d, "gnuplot-data", tmp_path)
    path = tmp_path / "ld_median_C_2.dat"
    assert str(path) in files
    rows = [ln.split() for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == len(d["lds"]["median"]["C_2"]["octaves"])
    assert all(len(r) == 4 for r in rows)
    assert [int(r[0]) for r in rows] == [o["j"] for o in d["lds"]["median"]["C_2"]["octaves"]]


def test_frontier_row(report, tmp_path):
    d = json.loads(dumps(report))
    run_report(d, "csv", tmp_path)
    lines = (tmp_path / "frontier.csv").read_text().splitlines()
    assert lines[0] == "j_f,delta_f,verdict"
    if d["frontier"]["j_f"] is not None:
        j_f, delta_f, _ = lines[1].split(",")
        assert float(delta_f) == pytest.approx(1e-3 * 2 ** float(j_f))


def test_dumps_rejects_nothing_nan():
    text = dumps({"x": float("nan"), "y": np.float64(1.5), "z": np.arange(2)})
    assert json.loads(text) == {"x": None, "y": 1.5, "z": [0, 1]}
