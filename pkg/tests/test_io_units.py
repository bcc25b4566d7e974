import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nanonmr.io import (format_float, ingest_timetags, read_csv, read_timetags, read_trace, write_csv,
                        write_trace)
from nanonmr.simulate import PhotonTrace
from nanonmr.units import UnitError, parse_quantity


@settings(max_examples=40, deadline=None)
@given(arrays(np.int64, st.integers(0, 50), elements=st.integers(0, 10 ** 6)),
       st.floats(1e-12, 1e3, allow_nan=False), st.integers(0, 2 ** 64 - 1))
def test_trace_round_trip(tmp_path_factory, counts, spacing, seed):
    path = tmp_path_factory.mktemp("t") / "trace.txt"
    write_trace(PhotonTrace(counts, spacing, {"seed": seed}), path, comments=["hello"])
    back = read_trace(path)
    assert np.array_equal(back.counts, counts)
    assert back.spacing == spacing
    assert back.meta["seed"] == seed


def test_trace_reader_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# c\nspacing_s=1e-6 seed=1\n3\n-1\n")
    with pytest.raises(ValueError):
        read_trace(p)
    p.write_text("3\n4\n")
    with pytest.raises(ValueError):
        read_trace(p)


def test_ingest_half_open_windows():
    tags = [0, 999, 1000, 25000, 25999, 26000, 50000]
    tr = ingest_timetags(tags, 25000, 0, 1000, 3)
    assert tr.counts.tolist() == [2, 2, 1]
    shifted = ingest_timetags(tags, 25000, 1000, 1000, 3)
    assert shifted.counts.tolist() == [1, 1, 0]
    assert tr.spacing == 25e-6


def test_ingest_empty_and_errors():
    assert ingest_timetags([], 25000, 0, 1000, 4).counts.tolist() == [0, 0, 0, 0]
    assert len(ingest_timetags([], 25000, 0, 1000)) == 0
    with pytest.raises(ValueError):
        ingest_timetags([5, 3], 25000, 0, 1000)
    with pytest.raises(ValueError):
        ingest_timetags([1], 25000, 0, 26000)
    with pytest.raises(ValueError):
        ingest_timetags([1], 25000, 24500, 1000)


@settings(max_examples=30, deadline=None)
@given(arrays(np.int64, st.integers(1, 40), elements=st.integers(0, 6)), st.integers(0, 2 ** 32))
def test_generate_then_ingest_identity(counts, seed):
    period, offset, length = 25000, 300, 2000
    rng = np.random.default_rng(seed)
    tags = []
    for j, c in enumerate(counts):
        start = j * period + offset
        tags.extend(rng.integers(start, start + length, c))
        # photons outside the window must not be counted
        tags.extend(rng.integers(start + length, (j + 1) * period + offset, 2))
    tags = np.sort(np.array(tags, dtype=np.int64))
    tr = ingest_timetags(tags, period, offset, length, counts.size)
    assert np.array_equal(tr.counts, counts)


def test_timetag_reader(tmp_path):
    p = tmp_path / "tags.txt"
    p.write_text("# header\n1\n5\n5\n9\n")
    assert read_timetags(p).tolist() == [1, 5, 5, 9]
    p.write_text("5\n4\n")
    with pytest.raises(ValueError):
        read_timetags(p)


def test_csv_round_trip(tmp_path):
    p = tmp_path / "x.csv"
    vals = [(0.1, 1 / 3, True), (math.pi, 1e-300, False)]
    write_csv(p, ("a", "b", "c"), vals)
    header, rows = read_csv(p)
    assert header == ["a", "b", "c"]
    assert [float(r[1]) for r in rows] == [1 / 3, 1e-300]
    assert rows[0][2] == "true"


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert float(format_float(2 / 3)) == 2 / 3
    assert format_float(7) == "7"


@pytest.mark.parametrize("a,b,kind", [("100 us", "0.0001 s", "time"), ("100µs", "0.1 ms", "time"),
                                      ("2 h", "7200 s", "time"), ("5 kHz", "5000 Hz", "frequency"),
                                      ("2 MHz", "2e6 Hz", "frequency"), ("0.1 G", "10 uT", "field")])
def test_equivalent_units_give_identical_floats(a, b, kind):
    assert parse_quantity(a, kind) == parse_quantity(b, kind)


def test_unit_errors():
    for bad in (100, "100", "100 parsecs", "abc us"):
        with pytest.raises(UnitError):
            parse_quantity(bad, "time")
