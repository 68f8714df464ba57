import csv
import io
import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import welford

from dpflbench.harness.experiment import RawRecord, aggregate
from dpflbench.harness.report import (
    format_csv,
    format_markdown,
    format_plot_data,
    format_raw,
    read_raw,
)

GOLDEN = Path(__file__).parent / "golden"
EPSILONS = (0.5, 5.0, 15.0, math.inf)
SETUPS = ("centralized-dp", "dpfl-iid", "dpfl-noniid")


def fixed_raw():
    accs = {0.5: (0.80, 0.82, 0.84), 5.0: (0.90, 0.91, 0.92), 15.0: (0.95, 0.95, 0.96), math.inf: (0.99, 1.0, 0.98)}
    offset = {"centralized-dp": 0.0, "dpfl-iid": -0.05, "dpfl-noniid": -0.10}
    raw = []
    # inserted in reverse so the formatter has to impose the order itself
    for setup in reversed(SETUPS):
        for eps in reversed(EPSILONS):
            for i, (s, a) in enumerate(zip((1, 2, 3), accs[eps])):
                raw.append(RawRecord(setup, eps, "linear", i, s, round(a + offset[setup], 4)))
    return raw


def _rows(raw=None):
    return aggregate(raw or fixed_raw(), 1e-5)


def _body(text):
    return [line for line in text.splitlines() if not line.startswith("#")]


def test_markdown_matches_golden():
    assert format_markdown(_rows(), "0" * 64) == (GOLDEN / "fixed_rows.md").read_text(encoding="utf-8")


def test_output_independent_of_completion_order():
    raw = fixed_raw()
    shuffled = raw[::3] + raw[1::3] + raw[2::3]
    for fmt in (format_markdown, format_csv, format_plot_data):
        assert fmt(_rows(raw), "d") == fmt(_rows(shuffled), "d")
    assert format_raw(raw, "d") == format_raw(shuffled, "d")


def test_plot_series_matches_table():
    rows = _rows()
    plot = list(csv.DictReader(io.StringIO("\n".join(_body(format_plot_data(rows))))))
    table = list(csv.DictReader(io.StringIO("\n".join(_body(format_csv(rows))))))
    assert len(plot) == 12
    assert all(len(p) == 5 for p in plot)
    per_setup = [p for p in plot if p["setup"] == "dpfl-iid"]
    assert [p["epsilon"] for p in per_setup] == ["0.5", "5", "15", "inf"]
    lookup = {(t["setup"], t["epsilon"], t["model"]): (t["mean_accuracy"], t["std_accuracy"]) for t in table}
    for p in plot:
        assert lookup[(p["setup"], p["epsilon"], p["model"])] == (p["mean"], p["std"])


def test_grid_is_complete():
    rows = _rows()
    assert {(r.setup, r.epsilon) for r in rows} == {(s, e) for s in SETUPS for e in EPSILONS}
    assert all(r.n_seeds == 3 for r in rows)


@settings(max_examples=100)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10))
def test_aggregation_matches_welford(accs):
    raw = [RawRecord("centralized", math.inf, "linear", i, i, a) for i, a in enumerate(accs)]
    (row,) = aggregate(raw, 1e-5)
    mean, std = welford([100 * a for a in accs])
    assert abs(row.mean_accuracy - mean) <= 1e-9
    assert abs(row.std_accuracy - std) <= 1e-9


def test_identical_seeds_have_zero_std():
    raw = [RawRecord("centralized", math.inf, "linear", i, 7, 0.8731) for i in range(3)]
    (row,) = aggregate(raw, 1e-5)
    assert row.std_accuracy == 0.0
    assert row.mean_accuracy == pytest.approx(87.31, abs=1e-12)


def test_raw_round_trip(tmp_path):
    raw = fixed_raw()
    path = tmp_path / "raw.csv"
    path.write_text(format_raw(raw, "abc", 1e-5))
    back, digest, delta = read_raw(path)
    assert digest == "abc" and delta == 1e-5
    assert sorted(back, key=repr) == sorted(raw, key=repr)


def test_empty_rows_rejected():
    with pytest.raises(ValueError):
        format_markdown([])
