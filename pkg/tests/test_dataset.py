import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demandcast.dataset import (
    CSV_COLUMNS,
    CsvParseError,
    DataError,
    DegenerateColumnError,
    DuplicateMonthError,
    SchemaError,
    WindowSpec,
    YearCoverageError,
    expand_yearly,
    fit_normalization,
    generate_synthetic,
    load_csv,
    load_yearly_csv,
    loads_csv,
    series_to_csv,
    slice_window,
    write_csv,
)

from conftest import toy_series


# --- load_csv ------------------------------------------------------------------


def test_load_csv_well_formed_176(tmp_path):
    series = generate_synthetic(seed=1, n_months=176)
    path = tmp_path / "demand.csv"
    write_csv(series, path)
    loaded = load_csv(path)
    assert len(loaded) == 176
    assert loaded == series  # repr round-trip is exact


def test_load_csv_shuffled_rows_equal_sorted(tmp_path):
    series = generate_synthetic(seed=2, n_months=30)
    text = series_to_csv(series)
    header, *rows = text.strip().split("\n")
    rng = np.random.default_rng(0)
    shuffled = [rows[i] for i in rng.permutation(len(rows))]
    sorted_path = tmp_path / "sorted.csv"
    shuffled_path = tmp_path / "shuffled.csv"
    sorted_path.write_text(header + "\n" + "\n".join(rows) + "\n")
    shuffled_path.write_text(header + "\n" + "\n".join(shuffled) + "\n")
    assert load_csv(shuffled_path) == load_csv(sorted_path)


def test_load_csv_missing_column_names_it():
    series = generate_synthetic(seed=3, n_months=5)
    text = series_to_csv(series)
    lines = text.strip().split("\n")
    # drop the demand column entirely
    keep = [i for i, name in enumerate(CSV_COLUMNS) if name != "demand"]
    broken = "\n".join(",".join(line.split(",")[i] for i in keep) for line in lines)
    with pytest.raises(SchemaError, match="demand"):
        loads_csv(broken)


def test_load_csv_non_numeric_cell_reports_line():
    series = generate_synthetic(seed=3, n_months=5)
    lines = series_to_csv(series).strip().split("\n")
    cells = lines[3].split(",")
    cells[4] = "oops"
    lines[3] = ",".join(cells)
    with pytest.raises(CsvParseError, match="line 4") as err:
        loads_csv("\n".join(lines))
    assert err.value.line == 4


def test_load_csv_duplicate_month():
    series = generate_synthetic(seed=3, n_months=5)
    lines = series_to_csv(series).strip().split("\n")
    lines.append(lines[2])
    with pytest.raises(DuplicateMonthError):
        loads_csv("\n".join(lines))


def test_load_csv_calendar_gap():
    series = generate_synthetic(seed=3, n_months=5)
    lines = series_to_csv(series).strip().split("\n")
    del lines[3]
    with pytest.raises(DataError, match="gap"):
        loads_csv("\n".join(lines))


def test_load_csv_bad_month_format():
    text = "month,gdp,population,co2,precipitation,temp_avg,temp_min,temp_max,demand\n"
    text += "2000/01,1,2,3,4,5,6,7,8\n"
    with pytest.raises(CsvParseError):
        loads_csv(text)


def test_load_yearly_csv(tmp_path):
    path = tmp_path / "gdp.csv"
    path.write_text("year,value\n2000,10.5\n2001,11.0\n")
    assert load_yearly_csv(path) == [(2000, 10.5), (2001, 11.0)]
    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1,2\n")
    with pytest.raises(SchemaError):
        load_yearly_csv(bad)


# --- expand_yearly ---------------------------------------------------------------


def test_expand_yearly_single_year_hold():
    months = [f"2000-{m:02d}" for m in range(1, 13)]
    out = expand_yearly([(2000, 10.0)], months)
    assert out.tolist() == [10.0] * 12


def test_expand_yearly_year_boundary():
    out = expand_yearly([(2000, 10.0), (2001, 20.0)], ["2000-12", "2001-01"])
    assert out.tolist() == [10.0, 20.0]


def test_expand_yearly_coverage_error():
    with pytest.raises(YearCoverageError):
        expand_yearly([(2000, 10.0)], ["2001-01"])


def test_expand_yearly_piecewise_constant_within_year():
    months = [f"{y}-{m:02d}" for y in (2000, 2001) for m in range(1, 13)]
    out = expand_yearly([(2000, 1.5), (2001, 2.5)], months)
    assert len(out) == len(months)
    assert set(out[:12]) == {1.5} and set(out[12:]) == {2.5}


def test_expand_yearly_interpolation_mode():
    months = [f"{y}-{m:02d}" for y in (2000, 2001) for m in range(1, 13)]
    out = expand_yearly([(2000, 0.0), (2001, 12.0)], months, mode="interpolate")
    # anchors at July 2000 (value 0) and July 2001 (value 12): one unit/month
    assert out[6] == 0.0          # 2000-07
    assert out[18] == 12.0        # 2001-07
    assert out[12] == pytest.approx(6.0)  # 2001-01, halfway
    assert out[0] == 0.0          # clamped before the first anchor
    assert np.all(np.diff(out) >= 0.0)
    with pytest.raises(ValueError):
        expand_yearly([(2000, 1.0)], ["2000-01"], mode="cubic")


# --- normalization ---------------------------------------------------------------


def test_fit_normalization_affine_map_examples():
    # demand column spanning {0, 10} over the fitted window
    demand = [0.0, 10.0, 2.0, 7.0]
    series = toy_series(demand)
    norm = fit_normalization(series, l=4)
    assert norm.normalize_demand(5.0) == pytest.approx(0.0, abs=1e-15)
    assert norm.normalize_demand(10.0) == 1.0
    assert norm.normalize_demand(0.0) == -1.0
    # out-of-window value maps outside [-1, 1]; that is allowed
    assert norm.normalize_demand(20.0) == pytest.approx(3.0, abs=1e-12)


def test_fit_normalization_degenerate_column():
    series = toy_series([5.0, 5.0, 5.0])
    with pytest.raises(DegenerateColumnError, match="demand"):
        fit_normalization(series, l=3)


def test_fit_normalization_locality():
    series_a = generate_synthetic(seed=9, n_months=60)
    rows = [
        (s.calendar_month, s.features, s.demand + (1e6 if s.month_index > 30 else 0.0))
        for s in series_a.samples
    ]
    from demandcast.dataset import series_from_rows

    series_b = series_from_rows(rows)
    norm_a = fit_normalization(series_a, l=30)
    norm_b = fit_normalization(series_b, l=30)
    np.testing.assert_array_equal(norm_a.lo, norm_b.lo)
    np.testing.assert_array_equal(norm_a.hi, norm_b.hi)


@settings(max_examples=200, deadline=None)
@given(
    lo=st.floats(-1e6, 1e6),
    width=st.floats(1e-3, 1e6),
    frac=st.floats(0, 1),
)
def test_normalization_round_trip_property(lo, width, frac):
    series = toy_series([lo, lo + width])
    norm = fit_normalization(series, l=2)
    v = lo + frac * width
    back = float(norm.denormalize_demand(norm.normalize_demand(v)))
    # always accurate relative to the column scale
    assert abs(back - v) <= 1e-12 * max(1.0, abs(lo), abs(lo + width))
    # and relative to the value itself whenever the value is not vanishingly
    # small against the column width (an affine float64 round trip cannot
    # beat eps*width in absolute terms)
    if abs(v) >= 1e-3 * width:
        assert abs(back - v) <= 1e-12 * max(1.0, abs(v))


# --- windows ---------------------------------------------------------------------


def test_slice_window_first_paper_window():
    series = generate_synthetic(seed=4, n_months=176)
    train, test = slice_window(series, WindowSpec(l=120, horizon=24))
    assert [s.month_index for s in train] == list(range(1, 121))
    assert [s.month_index for s in test] == list(range(121, 145))


def test_slice_window_last_valid_window():
    series = generate_synthetic(seed=4, n_months=176)
    train, test = slice_window(series, WindowSpec(l=152, horizon=24))
    assert test[0].month_index == 153 and test[-1].month_index == 176


def test_slice_window_range_error():
    series = generate_synthetic(seed=4, n_months=176)
    with pytest.raises(DataError):
        slice_window(series, WindowSpec(l=160, horizon=24))


def test_no_leakage_property():
    series = generate_synthetic(seed=5, n_months=80)
    for l in range(1, 80 - 24 + 1, 7):
        train, test = slice_window(series, WindowSpec(l=l, horizon=24))
        assert max(s.month_index for s in train) < min(s.month_index for s in test)
        assert len(train) + len(test) == l + 24


# --- synthetic generator -----------------------------------------------------------


def test_generate_synthetic_deterministic():
    a = generate_synthetic(seed=7, n_months=176)
    b = generate_synthetic(seed=7, n_months=176)
    assert a == b


def test_generate_synthetic_length_and_finiteness():
    series = generate_synthetic(seed=1, n_months=176)
    assert len(series) == 176
    assert np.all(np.isfinite(series.feature_matrix))
    assert np.all(np.isfinite(series.demand_vector))
    assert np.all(series.demand_vector > 0)  # MAPE needs nonzero actuals


def _autocorr(x: np.ndarray, lag: int) -> float:
    x = x - x.mean()
    return float(np.sum(x[:-lag] * x[lag:]) / np.sum(x * x))


def test_generate_synthetic_seasonality():
    series = generate_synthetic(seed=11, n_months=176)
    demand = series.demand_vector
    assert _autocorr(demand, 12) > _autocorr(demand, 6)
