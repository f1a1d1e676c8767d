import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biscale.aggregate import (
    DEFAULT_DELTA0,
    BinnedSeries,
    aggregate,
    iat_octave,
    load_series,
    median_iat,
    read_series,
    read_series_csv,
    write_series,
    write_series_csv,
)
from biscale.errors import EmptyStream, TooFewPackets

from conftest import udp


def test_small_binning():
    s = aggregate(np.array([0.0, 0.0001, 0.0002]), delta0=0.000125)
    assert s.counts.tolist() == [2, 1]
    assert s.counts.dtype == np.uint32


def test_accepts_records():
    s = aggregate([udp(0.0), udp(0.0001), udp(0.0002)], delta0=0.000125)
    assert s.counts.tolist() == [2, 1]


def test_default_delta0():
    assert DEFAULT_DELTA0 == pytest.approx(0.125e-3)


def test_empty_stream():
    with pytest.raises(EmptyStream):
        aggregate(np.array([]))


def test_uniform_histogram(rng):
    t = rng.uniform(0, 1, 10 ** 6)
    s = aggregate(t, delta0=0.001)
    assert len(s) == 1000
    assert np.all(np.abs(s.counts.astype(float) - 1000) < 6 * math.sqrt(1000))


def test_median_iat_examples(rng):
    assert median_iat(np.array([0.0, 1, 2, 3])) == 1.0
    assert median_iat(np.array([0.0, 1, 2, 102])) == 1.0
    t = np.cumsum(rng.exponential(1e-3, 200_000))
    assert median_iat(t) == pytest.approx(math.log(2) / 1000, rel=0.05)
    with pytest.raises(TooFewPackets):
        median_iat(np.array([0.0]))


def test_iat_octave():
    assert iat_octave(1e-3, 0.125e-3) == 3
    assert iat_octave(0.0) == 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=300),
       st.sampled_from([0.001, 0.01, 0.125, 1.0]))
def test_pairwise_sum_equals_double_width(ts, delta0):
    t = np.array(ts)
    fine = aggregate(t, delta0)
    coarse = aggregate(t, 2 * delta0)
    summed = fine.coarsen()
    assert summed.delta0 == coarse.delta0
    n = min(len(summed), len(coarse))
    assert np.array_equal(summed.counts[:n], coarse.counts[:n])
    # any extra bin on either side is empty
    assert summed.counts[n:].sum() == 0 and coarse.counts[n:].sum() == 0
    assert fine.total == coarse.total == t.size


def test_fixed_length_discards_tail():
    s = aggregate(np.array([0.0, 0.5, 2.5]), delta0=1.0, n_bins=2)
    assert s.counts.tolist() == [2, 0]


def test_drop_partial():
    s = aggregate(np.array([0.0, 0.5, 2.5]), delta0=1.0, drop_partial=True)
    assert s.counts.tolist() == [2, 0]


@pytest.mark.parametrize("counts", [np.array([3, 0, 7, 2 ** 32 - 1], dtype=np.uint32),
                                    np.array([0.5, -1.25, 3.0])])
def test_binary_round_trip(tmp_path, counts):
    s = BinnedSeries(0.001, counts)
    write_series(tmp_path / "s.bin", s)
    back = read_series(tmp_path / "s.bin")
    assert back.delta0 == s.delta0
    assert back.counts.dtype == s.counts.dtype
    assert np.array_equal(back.counts, s.counts)


def test_binary_bad_magic(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOPE" + b"\0" * 16)
    with pytest.raises(ValueError):
        read_series(tmp_path / "x.bin")


def test_csv_round_trip(tmp_path):
    s = BinnedSeries(0.000125, np.array([1, 2, 3], dtype=np.uint32))
    write_series_csv(tmp_path / "s.csv", s)
    back = load_series(tmp_path / "s.csv")
    assert back.delta0 == s.delta0
    assert back.counts.tolist() == [1, 2, 3]
    text = (tmp_path / "s.csv").read_text()
    assert read_series_csv(io.StringIO(text)).counts.tolist() == [1, 2, 3]


def test_series_is_immutable():
    s = BinnedSeries(1.0, np.array([1, 2]))
    with pytest.raises(ValueError):
        s.counts[0] = 5


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        BinnedSeries(1.0, np.array([1, -2]))
