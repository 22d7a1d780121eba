"""Monthly demand series: loading, yearly-driver alignment, scaling, windowing.

A series is a contiguous run of calendar months, each carrying seven driver
features (two socio-economic trend variables, CO2, precipitation and three
temperature columns) plus the monthly demand target.  Scaling is min-max to
[-1, 1] and is always fitted on the first ``l`` months only, so expanding
training windows never see test-month statistics.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

FEATURE_COLUMNS = (
    "gdp",
    "population",
    "co2",
    "precipitation",
    "temp_avg",
    "temp_min",
    "temp_max",
)
TARGET_COLUMN = "demand"
MONTH_COLUMN = "month"
CSV_COLUMNS = (MONTH_COLUMN,) + FEATURE_COLUMNS + (TARGET_COLUMN,)

# Yearly driver tables only make sense for these columns.
YEARLY_COLUMNS = ("gdp", "population", "co2")

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


class DataError(Exception):
    """Base class for everything wrong with input data."""


class SchemaError(DataError):
    """CSV header does not name the required columns."""


class CsvParseError(DataError):
    """A cell failed to parse; carries the 1-based file line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateMonthError(DataError):
    """The same calendar month appears twice."""


class YearCoverageError(DataError):
    """A month's calendar year is missing from a yearly driver table."""


class DegenerateColumnError(DataError):
    """A column is constant over the fitting window, so min-max is undefined."""


class WindowRangeError(DataError):
    """Training window plus horizon does not fit inside the series."""


def _parse_month(text: str) -> tuple[int, int]:
    m = _MONTH_RE.match(text.strip())
    if m is None:
        raise ValueError(f"month {text!r} is not in YYYY-MM form")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"month {text!r} has month number outside 1..12")
    return year, month


def _month_ordinal(text: str) -> int:
    year, month = _parse_month(text)
    return year * 12 + (month - 1)


def _ordinal_to_month(ordinal: int) -> str:
    return f"{ordinal // 12:04d}-{ordinal % 12 + 1:02d}"


@dataclass(frozen=True)
class MonthlySample:
    """One calendar month: driver vector plus demand target."""

    month_index: int
    calendar_month: str
    features: tuple[float, ...]
    demand: float

    def __post_init__(self):
        if len(self.features) != len(FEATURE_COLUMNS):
            raise ValueError(
                f"expected {len(FEATURE_COLUMNS)} features, got {len(self.features)}"
            )
        if not all(np.isfinite(v) for v in self.features) or not np.isfinite(self.demand):
            raise ValueError(f"non-finite value in sample {self.calendar_month}")


@dataclass(frozen=True)
class Series:
    """An ordered, gap-free monthly series."""

    samples: tuple[MonthlySample, ...]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("series must contain at least one sample")
        ordinals = [_month_ordinal(s.calendar_month) for s in self.samples]
        for i, sample in enumerate(self.samples):
            if sample.month_index != i + 1:
                raise ValueError(
                    f"month_index must run 1..N, found {sample.month_index} at position {i}"
                )
            if i and ordinals[i] != ordinals[i - 1] + 1:
                raise ValueError(
                    f"calendar gap between {self.samples[i - 1].calendar_month} "
                    f"and {sample.calendar_month}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def length(self) -> int:
        return len(self.samples)

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        x = np.array([s.features for s in self.samples], dtype=float)
        x.setflags(write=False)
        return x

    @cached_property
    def demand_vector(self) -> np.ndarray:
        y = np.array([s.demand for s in self.samples], dtype=float)
        y.setflags(write=False)
        return y

    @property
    def calendar_months(self) -> tuple[str, ...]:
        return tuple(s.calendar_month for s in self.samples)

    def __getstate__(self):
        # Drop cached arrays so pickling (process pools) stays lean.
        return {"samples": self.samples}

    def __setstate__(self, state):
        object.__setattr__(self, "samples", state["samples"])


@dataclass(frozen=True)
class WindowSpec:
    """Training window of length ``l`` followed by a test horizon."""

    l: int
    horizon: int = 24

    def __post_init__(self):
        if self.l < 1:
            raise WindowRangeError(f"window length must be >= 1, got {self.l}")
        if self.horizon < 1:
            raise WindowRangeError(f"horizon must be >= 1, got {self.horizon}")


def series_from_rows(rows: Iterable[tuple[str, Sequence[float], float]]) -> Series:
    """Build a Series from (calendar_month, features, demand) rows, sorting by month."""
    parsed = sorted(rows, key=lambda r: _month_ordinal(r[0]))
    samples = tuple(
        MonthlySample(
            month_index=i + 1,
            calendar_month=month,
            features=tuple(float(v) for v in feats),
            demand=float(demand),
        )
        for i, (month, feats, demand) in enumerate(parsed)
    )
    return Series(samples)


def load_csv(path) -> Series:
    """Load a monthly series from a CSV file with the canonical 9-column schema.

    Rows may appear in any order; the result is sorted by calendar month and
    month_index is assigned 1..N.  Raises SchemaError / CsvParseError /
    DuplicateMonthError / DataError (calendar gap) on malformed input.
    """
    with open(path, newline="") as fh:
        return _read_csv(fh)


def loads_csv(text: str) -> Series:
    """Like load_csv but from an in-memory string (service ingestion path)."""
    import io

    return _read_csv(io.StringIO(text))


def _read_csv(fh) -> Series:
    reader = csv.DictReader(fh)
    header = reader.fieldnames
    if header is None:
        raise SchemaError("empty file: no header row")
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")

    rows: list[tuple[str, list[float], float]] = []
    seen: dict[str, int] = {}
    for record in reader:
        line = reader.line_num
        raw_month = (record.get(MONTH_COLUMN) or "").strip()
        try:
            ordinal = _month_ordinal(raw_month)
        except ValueError as exc:
            raise CsvParseError(str(exc), line) from None
        month = _ordinal_to_month(ordinal)
        if month in seen:
            raise DuplicateMonthError(
                f"month {month} appears on lines {seen[month]} and {line}"
            )
        seen[month] = line

        values = []
        for col in FEATURE_COLUMNS + (TARGET_COLUMN,):
            cell = record.get(col)
            if cell is None or cell.strip() == "":
                raise CsvParseError(f"empty {col!r} cell", line)
            try:
                value = float(cell)
            except ValueError:
                raise CsvParseError(f"non-numeric {col!r} cell {cell!r}", line) from None
            if not np.isfinite(value):
                raise CsvParseError(f"non-finite {col!r} cell {cell!r}", line)
            values.append(value)
        rows.append((month, values[:-1], values[-1]))

    if not rows:
        raise SchemaError("no data rows")
    try:
        return series_from_rows(rows)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def series_to_csv(series: Series) -> str:
    """Render a series as canonical CSV text (exact float round-trip)."""
    lines = [",".join(CSV_COLUMNS)]
    for s in series.samples:
        cells = [s.calendar_month]
        cells += [repr(float(v)) for v in s.features]
        cells.append(repr(float(s.demand)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(series: Series, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(series_to_csv(series))


def load_yearly_csv(path) -> list[tuple[int, float]]:
    """Load a yearly driver table from a `year,value` CSV file."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"year", "value"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: yearly file needs 'year' and 'value' columns")
        rows = []
        for record in reader:
            try:
                rows.append((int(record["year"]), float(record["value"])))
            except (TypeError, ValueError):
                raise CsvParseError(
                    f"bad year/value pair {record!r}", reader.line_num
                ) from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def expand_yearly(
    yearly: Sequence[tuple[int, float]], months: Sequence[str], mode: str = "hold"
) -> np.ndarray:
    """Expand a yearly table onto a month grid.

    The default step-hold gives each month its calendar year's value; the
    alternative ``mode="interpolate"`` draws a line between mid-year anchors
    (clamped at the ends).  Every month's year must appear in the table.
    """
    if mode not in ("hold", "interpolate"):
        raise ValueError(f"mode must be 'hold' or 'interpolate', got {mode!r}")
    table: dict[int, float] = {}
    for year, value in yearly:
        year = int(year)
        if year in table:
            raise DataError(f"year {year} appears twice in yearly table")
        table[year] = float(value)
    ordinals = np.empty(len(months), dtype=float)
    for i, month in enumerate(months):
        year, _ = _parse_month(month)
        if year not in table:
            raise YearCoverageError(f"year {year} (month {month}) not covered by yearly table")
        ordinals[i] = _month_ordinal(month)
    if mode == "hold":
        return np.array([table[_parse_month(m)[0]] for m in months], dtype=float)
    years = sorted(table)
    anchors = np.array([y * 12 + 6 for y in years], dtype=float)  # July of each year
    values = np.array([table[y] for y in years], dtype=float)
    return np.interp(ordinals, anchors, values)


@dataclass(frozen=True)
class NormalizationParams:
    """Per-column affine map onto [-1, 1], fitted on a training window.

    Column order is the seven features followed by demand.  Values outside the
    fitted range map outside [-1, 1]; that is intentional for test months.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        for name in ("lo", "hi"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def _scale(self, values, col_slice):
        lo, hi = self.lo[col_slice], self.hi[col_slice]
        return 2.0 * (np.asarray(values, dtype=float) - lo) / (hi - lo) - 1.0

    def _unscale(self, values, col_slice):
        lo, hi = self.lo[col_slice], self.hi[col_slice]
        return lo + (np.asarray(values, dtype=float) + 1.0) * (hi - lo) / 2.0

    def normalize_features(self, x: np.ndarray) -> np.ndarray:
        return self._scale(x, slice(0, len(FEATURE_COLUMNS)))

    def denormalize_features(self, x: np.ndarray) -> np.ndarray:
        return self._unscale(x, slice(0, len(FEATURE_COLUMNS)))

    def normalize_demand(self, y) -> np.ndarray:
        return self._scale(y, -1)

    def denormalize_demand(self, y) -> np.ndarray:
        return self._unscale(y, -1)


def fit_normalization(series: Series, l: int) -> NormalizationParams:
    """Fit per-column min/max on samples 1..l only (never on test months)."""
    if not 1 <= l <= len(series):
        raise WindowRangeError(f"fit window {l} outside series of length {len(series)}")
    window = np.column_stack(
        [series.feature_matrix[:l], series.demand_vector[:l]]
    )
    lo = window.min(axis=0)
    hi = window.max(axis=0)
    names = FEATURE_COLUMNS + (TARGET_COLUMN,)
    for name, a, b in zip(names, lo, hi):
        if a == b:
            raise DegenerateColumnError(
                f"column {name!r} is constant ({a}) over months 1..{l}"
            )
    return NormalizationParams(lo=lo, hi=hi)


def slice_window(
    series: Series, spec: WindowSpec
) -> tuple[tuple[MonthlySample, ...], tuple[MonthlySample, ...]]:
    """Split into (train months 1..l, test months l+1..l+horizon)."""
    end = spec.l + spec.horizon
    if end > len(series):
        raise WindowRangeError(
            f"window l={spec.l} + horizon={spec.horizon} needs {end} months, "
            f"series has {len(series)}"
        )
    return series.samples[: spec.l], series.samples[spec.l : end]


def generate_synthetic(seed: int, n_months: int, start_month: str = "1999-01") -> Series:
    """Deterministic synthetic stand-in for the real monthly demand series.

    Demand is a linear trend plus a 12-month cycle plus components linked to
    the temperature and GDP proxies plus Gaussian noise; GDP/population/CO2 are
    yearly values step-held onto months, the temperature triple is seasonal.
    """
    if n_months < 1:
        raise ValueError("n_months must be >= 1")
    rng = np.random.default_rng(seed)
    start = _month_ordinal(start_month)
    ordinals = np.arange(start, start + n_months)
    months = [_ordinal_to_month(o) for o in ordinals]
    years = sorted({o // 12 for o in ordinals})
    y0 = years[0]

    gdp_table = [
        (y, 400.0 + 18.0 * (y - y0) + rng.normal(0.0, 3.0)) for y in years
    ]
    pop_table = [
        (y, 19.0 + 0.26 * (y - y0) + rng.normal(0.0, 0.02)) for y in years
    ]
    co2_table = [
        (y, 340.0 + 5.5 * (y - y0) + rng.normal(0.0, 2.5)) for y in years
    ]
    gdp = expand_yearly(gdp_table, months)
    population = expand_yearly(pop_table, months)
    co2 = expand_yearly(co2_table, months)

    t = np.arange(n_months, dtype=float)
    phase = 2.0 * np.pi * (ordinals % 12) / 12.0
    precipitation = np.clip(
        46.0 + 17.0 * np.sin(phase + 0.7) + rng.normal(0.0, 5.0, n_months), 0.0, None
    )
    temp_avg = 1.1 * np.cos(phase) + 0.012 * t / 12.0 + rng.normal(0.0, 0.2, n_months)
    temp_min = temp_avg - 1.4 - 0.3 * np.cos(phase + 0.3) + rng.normal(0.0, 0.15, n_months)
    temp_max = temp_avg + 1.5 + 0.4 * np.cos(phase - 0.2) + rng.normal(0.0, 0.15, n_months)

    demand = (
        14000.0
        + 9.0 * t
        + 850.0 * np.cos(phase - 0.4)
        + 260.0 * temp_avg
        + 2.1 * gdp
        + rng.normal(0.0, 110.0, n_months)
    )

    rows = []
    for i, month in enumerate(months):
        feats = (
            gdp[i],
            population[i],
            co2[i],
            precipitation[i],
            temp_avg[i],
            temp_min[i],
            temp_max[i],
        )
        rows.append((month, feats, demand[i]))
    return series_from_rows(rows)
