import math
from pathlib import Path
from typing import Iterable, Sequence, Tuple

import numpy as np
import pandas as pd

from activity_time import years_since
from market_data import ObservationSeries, SeriesRole


def write_csv(path: Path, rows: Iterable[Tuple[str, str]], header: Sequence[str] = ("date", "value")) -> Path:
    lines = [",".join(header)] + [f"{d},{v}" for d, v in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def business_dates(n: int, start: str = "2000-01-03") -> pd.DatetimeIndex:
    return pd.bdate_range(start, periods=n)


def wavy_series(dates: pd.DatetimeIndex, drift: float = 2e-4, role: SeriesRole = SeriesRole.DISCOUNTED) -> ObservationSeries:
    """A smooth, strictly positive series with a trend and oscillations."""
    i = np.arange(len(dates))
    values = np.exp(drift * i + 0.02 * np.sin(i / 7.0) + 0.01 * np.cos(i / 3.0))
    return ObservationSeries(dates=dates, values=values, role=role)


def exact_activity_series(dates: pd.DatetimeIndex, tau0: float, slope: float, s0: float = 1.0) -> ObservationSeries:
    """
    A series whose activity time with initial value tau0 is exactly
    tau0 + slope * t: each squared increment of sqrt(S) equals the
    increment of e^tau.
    """
    t = years_since(dates, dates[0])
    steps = np.diff(np.exp(tau0 + slope * t))
    root = math.sqrt(s0) + np.concatenate(([0.0], np.cumsum(np.sqrt(steps))))
    return ObservationSeries(dates=dates, values=root ** 2, role=SeriesRole.DISCOUNTED)


def write_market_files(directory: Path, n: int = 60, rate: float = 4.0, start: str = "2000-01-03") -> Tuple[Path, Path]:
    """Index and T-bill CSVs on a shared business-day grid."""
    dates = business_dates(n, start)
    index = wavy_series(dates, role=SeriesRole.INDEX).values * 100.0
    index_path = write_csv(directory / "index.csv", [(d.date(), repr(float(v))) for d, v in zip(dates, index)])
    rates_path = write_csv(directory / "rates.csv", [(d.date(), rate) for d in dates])
    return index_path, rates_path


def random_walk_series(dates: pd.DatetimeIndex, daily_vol: float = 0.08, seed: int = 3) -> ObservationSeries:
    """
    A seeded geometric random walk. A daily volatility near 0.08 makes the
    quadratic variation of sqrt(S) over a year comparable to S, so one-year
    bonds price well inside (0, 1).
    """
    rng = np.random.default_rng(seed)
    log_moves = rng.normal(5e-4, daily_vol, len(dates) - 1)
    values = np.exp(np.concatenate(([0.0], np.cumsum(log_moves))))
    return ObservationSeries(dates=dates, values=values, role=SeriesRole.DISCOUNTED)
