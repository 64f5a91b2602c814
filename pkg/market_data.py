import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from utils.errors import DataError, NumericalError
from utils.helpers import PathLike, write_frame


class SeriesRole(str, Enum):
    INDEX = "index"
    RATE = "rate"
    ACCOUNT = "account"
    DISCOUNTED = "discounted"


# Roles whose values must be strictly positive
_POSITIVE_ROLES = {SeriesRole.INDEX, SeriesRole.ACCOUNT, SeriesRole.DISCOUNTED}


class ColumnSchema(BaseModel):
    """
    Describes where the date and value columns live in an input CSV.

    Attributes:
        date_column (str): Name of the ISO-8601 date column.
        value_column (str): Name of the numeric value column.
        delimiter (str): Field delimiter.
        missing_markers (List[str]): Cell contents treated as a missing value.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    date_column: str = "date"
    value_column: str = "value"
    delimiter: str = ","
    missing_markers: List[str] = Field(default_factory=lambda: ["", ".", "NA", "NaN", "nan"])


@dataclass(frozen=True)
class ObservationSeries:
    """
    A dated series of market observations on a strictly increasing grid.

    Attributes:
        dates (pd.DatetimeIndex): Observation dates (normalized to midnight).
        values (np.ndarray): Observed values, one per date.
        role (SeriesRole): What the values represent.
        skipped (int): Rows dropped during parsing because the value was missing.
    """
    dates: pd.DatetimeIndex
    values: np.ndarray
    role: SeriesRole
    skipped: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if len(self.dates) != len(values):
            raise DataError(f"{self.role.value} series has {len(self.dates)} dates but {len(values)} values")
        if len(values) < 2:
            raise DataError(f"{self.role.value} series needs at least 2 observations, got {len(values)}")
        if not self.dates.is_monotonic_increasing or not self.dates.is_unique:
            raise DataError(f"{self.role.value} series dates are not strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{self.role.value} series contains non-finite values")
        if self.role in _POSITIVE_ROLES and np.any(values <= 0):
            bad = self.dates[np.argmax(values <= 0)]
            raise DataError(f"{self.role.value} series has a nonpositive value on {bad.date()}")

    def __len__(self) -> int:
        return len(self.values)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": self.dates, "value": self.values})


@dataclass(frozen=True)
class SavingsAccount(ObservationSeries):
    role: SeriesRole = SeriesRole.ACCOUNT

    def __post_init__(self):
        super().__post_init__()
        if self.values[0] != 1.0:
            raise DataError(f"savings account must start at 1, got {self.values[0]}")


@dataclass(frozen=True)
class JoinReport:
    """Dates that were present in only one of two joined series."""
    dropped_left: int = 0
    dropped_right: int = 0


@dataclass(frozen=True)
class DiscountedIndex(ObservationSeries):
    role: SeriesRole = SeriesRole.DISCOUNTED
    join: JoinReport = field(default_factory=JoinReport)


def load_series(path: PathLike, schema: ColumnSchema = ColumnSchema(), role: SeriesRole = SeriesRole.INDEX) -> ObservationSeries:
    """
    Parses a two-column CSV into an ObservationSeries.

    Rows whose value cell is empty (or one of the schema's missing markers) are
    skipped and counted. Rows are sorted by date; duplicate dates are an error.

    Args:
        path (PathLike): CSV file with a header row.
        schema (ColumnSchema): Column names and delimiter.
        role (SeriesRole): What the values represent.

    Returns:
        ObservationSeries: The parsed series.

    Example:
        sp500 = load_series("data/sp500tr.csv", ColumnSchema(value_column="close"))
    """
    try:
        raw = pd.read_csv(path, sep=schema.delimiter, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e

    missing_columns = {schema.date_column, schema.value_column} - set(raw.columns)
    if missing_columns:
        raise DataError(f"{path} lacks column(s) {sorted(missing_columns)}")

    cells = raw[schema.value_column].str.strip()
    missing = cells.isin(schema.missing_markers)
    skipped = int(missing.sum())
    if skipped:
        logging.warning(f"{path}: skipped {skipped} row(s) with a missing value.")
    kept = raw.loc[~missing]

    try:
        dates = pd.to_datetime(kept[schema.date_column].str.strip(), format="ISO8601")
    except (ValueError, TypeError) as e:
        raise DataError(f"{path}: unparsable date: {e}") from e
    try:
        # astype parses each cell exactly as float() does, so written series reload bit for bit
        values = cells[~missing].astype(float).to_numpy()
    except (ValueError, TypeError) as e:
        raise DataError(f"{path}: unparsable number: {e}") from e

    order = np.argsort(dates.to_numpy(), kind="stable")
    dates = pd.DatetimeIndex(dates.to_numpy()[order]).normalize()
    if dates.has_duplicates:
        duplicated = dates[dates.duplicated()][0]
        raise DataError(f"{path}: duplicated date {duplicated.date()}")

    series = ObservationSeries(dates=dates, values=values[order], role=role, skipped=skipped)
    logging.info(f"Loaded {len(series)} {role.value} observations from {path}.")
    return series


def write_series(series: ObservationSeries, path: PathLike):
    """Writes the canonical (date,value) CSV for a series."""
    write_frame(series.to_frame(), path)


def align_rates(rates: ObservationSeries, index: ObservationSeries) -> Tuple[ObservationSeries, int]:
    """
    Puts the rate series on the index's date grid.

    Each index date takes the last rate observed on or before it; index dates
    preceding the first rate are dropped.

    Args:
        rates (ObservationSeries): Discount rates in percent.
        index (ObservationSeries): The index whose grid is wanted.

    Returns:
        Tuple[ObservationSeries, int]: Rates on the (possibly shortened) index
        grid and the number of index dates that received a carried-forward rate.
    """
    rate_by_date = pd.Series(rates.values, index=rates.dates)
    on_grid = rate_by_date.reindex(index.dates, method="ffill")
    exact = index.dates.isin(rates.dates)
    covered = on_grid.notna().to_numpy()
    carried = int(np.sum(covered & ~exact))
    if carried:
        logging.warning(f"Carried the last T-bill rate forward onto {carried} index date(s).")
    dropped = int(np.sum(~covered))
    if dropped:
        logging.warning(f"Dropped {dropped} index date(s) preceding the first T-bill rate.")
    aligned = ObservationSeries(
        dates=index.dates[covered],
        values=on_grid.to_numpy()[covered],
        role=SeriesRole.RATE,
    )
    return aligned, carried


def build_savings_account(tbill: ObservationSeries, min_rate: float = 0.0, max_rate: float = 40.0) -> SavingsAccount:
    """
    Rolls a 3-month T-bill account over the observation grid.

    A_{i+1} = A_i (1 - r/100 (90 - d)/360) / (1 - r/100 * 90/360), with r the
    discount rate quoted for t_{i+1} and d the calendar days from t_i to t_{i+1}.

    Args:
        tbill (ObservationSeries): Discount rates in percent per annum.
        min_rate (float): Smallest accepted rate.
        max_rate (float): Rates must stay strictly below this bound.

    Returns:
        SavingsAccount: Account values starting at exactly 1.
    """
    rates = tbill.values
    out_of_range = (rates < min_rate) | (rates >= max_rate)
    if np.any(out_of_range):
        bad = tbill.dates[np.argmax(out_of_range)]
        raise DataError(f"T-bill rate {rates[np.argmax(out_of_range)]} on {bad.date()} is outside [{min_rate}, {max_rate})")

    r = rates[1:] / 100.0
    days = np.diff(tbill.dates.to_numpy()).astype("timedelta64[D]").astype(float)
    numerator = 1.0 - r * (90.0 - days) / 360.0
    denominator = 1.0 - r * 90.0 / 360.0
    broken = (numerator <= 0) | (denominator <= 0)
    if np.any(broken):
        bad = tbill.dates[1:][np.argmax(broken)]
        raise NumericalError(f"Savings-account recursion factor is not positive on {bad.date()}")

    values = np.empty(len(rates))
    values[0] = 1.0
    np.cumprod(numerator / denominator, out=values[1:])
    return SavingsAccount(dates=tbill.dates, values=values)


def discount_index(index: ObservationSeries, account: SavingsAccount) -> DiscountedIndex:
    """
    Divides the index by the savings account on their common dates.

    Args:
        index (ObservationSeries): Index levels.
        account (SavingsAccount): Savings-account values.

    Returns:
        DiscountedIndex: index / account on the intersection of both grids.
    """
    common = index.dates.intersection(account.dates).sort_values()
    if len(common) == 0:
        raise DataError("Index and savings account share no dates")
    left_at = index.dates.get_indexer(common)
    right_at = account.dates.get_indexer(common)
    report = JoinReport(dropped_left=len(index) - len(common), dropped_right=len(account) - len(common))
    if report.dropped_left or report.dropped_right:
        logging.warning(
            f"Date join dropped {report.dropped_left} index and {report.dropped_right} account date(s)."
        )
    return DiscountedIndex(
        dates=common,
        values=index.values[left_at] / account.values[right_at],
        join=report,
    )
