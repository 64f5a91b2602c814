import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize, stats

from market_data import ObservationSeries
from utils.errors import ConfigError, NumericalError

DAYS_PER_YEAR = 365.25

Window = Tuple[int, int]


@dataclass(frozen=True)
class ActivityTimePath:
    """
    Discretely observed activity time
    tau_i = ln( sum_{l<=i} (sqrt(S_l) - sqrt(S_{l-1}))^2 + e^{tau0} ).

    Attributes:
        dates (pd.DatetimeIndex): Observation dates of the underlying index.
        tau (np.ndarray): Activity time per date, nondecreasing.
        tau0 (float): The initial activity time, equal to tau[0].
    """
    dates: pd.DatetimeIndex
    tau: np.ndarray
    tau0: float

    def __len__(self) -> int:
        return len(self.tau)


@dataclass(frozen=True)
class TrendLine:
    """
    Linear trend tau_bar(t) = intercept + slope * t of the activity time.

    Attributes:
        intercept (float): Trend value at the time origin.
        slope (float): Activity-time growth per year.
        r_squared (float): Coefficient of determination of the fit.
        fit_window (Window): Inclusive index range the fit used.
        time_origin (pd.Timestamp): Date where t = 0.
    """
    intercept: float
    slope: float
    r_squared: float
    fit_window: Window
    time_origin: pd.Timestamp


class TauSearch(BaseModel):
    """
    Search settings for the initial activity time.

    lo/hi default to [ln q - 8, ln q + 2], with q the accumulated squared
    square-root increments over the fit window.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    lo: Optional[float] = None
    hi: Optional[float] = None
    grid_points: int = Field(default=201, ge=1)
    tolerance: float = Field(default=1e-8, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo is not None and self.hi is not None and not self.lo < self.hi:
            raise ValueError(f"tau0 bracket must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        return self


@dataclass(frozen=True)
class TauEstimate:
    tau0: float
    trendline: TrendLine
    at_boundary: bool = False


def years_since(dates: pd.DatetimeIndex, origin: pd.Timestamp) -> np.ndarray:
    """Actual calendar days from origin divided by 365.25."""
    days = (dates - origin).to_numpy().astype("timedelta64[D]").astype(float)
    return days / DAYS_PER_YEAR


def first_half_window(n_obs: int) -> Window:
    """
    Inclusive window (0, N/2) where N is the last even observation index.

    Example:
        first_half_window(11) == (0, 5)   # indices 0..10, N = 10
        first_half_window(12) == (0, 5)   # indices 0..11, N = 10
    """
    if n_obs < 3:
        raise ConfigError(f"Need at least 3 observations to split the sample, got {n_obs}")
    last = n_obs - 1
    n_even = last if last % 2 == 0 else last - 1
    return 0, n_even // 2


def squared_increments(values: np.ndarray) -> np.ndarray:
    return np.diff(np.sqrt(values)) ** 2


def activity_time(S: ObservationSeries, tau0: float) -> ActivityTimePath:
    """
    Computes the activity time path of a discounted index.

    Args:
        S (ObservationSeries): Strictly positive discounted index.
        tau0 (float): Initial activity time.

    Returns:
        ActivityTimePath: tau on the same grid, tau[0] == tau0.
    """
    if not math.isfinite(tau0):
        raise ConfigError(f"Initial activity time must be finite, got {tau0}")
    accumulated = np.concatenate(([0.0], np.cumsum(squared_increments(S.values))))
    tau = np.log(accumulated + math.exp(tau0))
    tau[0] = tau0
    return ActivityTimePath(dates=S.dates, tau=tau, tau0=float(tau0))


def _r_squared(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    ss_res = float(np.sum((y - fitted) ** 2))
    return min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)


def _fit(tau: np.ndarray, time_axis: np.ndarray, window: Window, origin: pd.Timestamp) -> TrendLine:
    start, stop = window
    if stop - start + 1 < 3:
        raise ConfigError(f"Trendline window {window} holds fewer than 3 observations")
    x = time_axis[start:stop + 1]
    y = tau[start:stop + 1]
    if np.ptp(x) == 0.0:
        raise NumericalError(f"Degenerate time axis over window {window}")
    if np.ptp(y) == 0.0:
        return TrendLine(float(y[0]), 0.0, 1.0, window, origin)
    fit = stats.linregress(x, y)
    r_squared = _r_squared(y, fit.intercept + fit.slope * x)
    return TrendLine(float(fit.intercept), float(fit.slope), r_squared, window, origin)


def fit_trendline(path: ActivityTimePath, window: Window, time_axis: Optional[np.ndarray] = None) -> TrendLine:
    """
    Ordinary least squares of tau on calendar time over an inclusive window.

    Args:
        path (ActivityTimePath): Activity time to fit.
        window (Window): Inclusive index range, at least 3 observations.
        time_axis (np.ndarray): Years since path.dates[0]; computed if omitted.

    Returns:
        TrendLine: Intercept, slope per year and R^2 (1 when tau is constant).
    """
    origin = path.dates[0]
    if time_axis is None:
        time_axis = years_since(path.dates, origin)
    if window[0] < 0 or window[1] >= len(path):
        raise ConfigError(f"Trendline window {window} exceeds a path of length {len(path)}")
    return _fit(path.tau, np.asarray(time_axis, dtype=float), window, origin)


def default_bracket(S: ObservationSeries, window: Window) -> Tuple[float, float]:
    q = float(np.sum(squared_increments(S.values[window[0]:window[1] + 1])))
    if q <= 0.0:
        # Flat index: any tau0 gives a constant path; centre on 0.
        return -8.0, 2.0
    return math.log(q) - 8.0, math.log(q) + 2.0


def estimate_initial_tau(S: ObservationSeries, window: Window, search: TauSearch = TauSearch()) -> TauEstimate:
    """
    Chooses tau0 so that the trendline fitted over the window has maximal R^2.

    A coarse grid over the bracket locates the best candidate (ties go to the
    smallest tau0); golden-section search then refines it between the
    neighbouring grid points.

    Args:
        S (ObservationSeries): Discounted index.
        window (Window): Inclusive fit window, normally first_half_window(len(S)).
        search (TauSearch): Bracket, grid size and tolerance.

    Returns:
        TauEstimate: tau0, the fit at tau0 and whether the maximizer sits on
        a bracket endpoint.
    """
    lo, hi = default_bracket(S, window)
    lo = search.lo if search.lo is not None else lo
    hi = search.hi if search.hi is not None else hi
    if not lo < hi:
        raise ConfigError(f"tau0 bracket must satisfy lo < hi, got [{lo}, {hi}]")

    stop = window[1]
    head = S.values[:stop + 1]
    increments = np.concatenate(([0.0], np.cumsum(squared_increments(head))))
    origin = S.dates[0]
    time_axis = years_since(S.dates[:stop + 1], origin)

    def r_squared(tau0: float) -> float:
        tau = np.log(increments + math.exp(tau0))
        tau[0] = tau0
        return _fit(tau, time_axis, window, origin).r_squared

    grid = np.linspace(lo, hi, search.grid_points)
    scores = np.array([r_squared(x) for x in grid])
    best = int(np.argmax(scores))
    at_boundary = len(grid) == 1 or best in (0, len(grid) - 1)

    tau0 = float(grid[best])
    if at_boundary:
        logging.warning(
            f"R^2 maximizer tau0={tau0:.6f} lies on the bracket edge [{lo:.4f}, {hi:.4f}]; widen the bracket."
        )
    else:
        left, mid, right = grid[best - 1], grid[best], grid[best + 1]
        try:
            refined = optimize.minimize_scalar(
                lambda x: -r_squared(x), bracket=(left, mid, right), method="golden", tol=search.tolerance
            ).x
        except ValueError:
            # Flat neighbourhood: no strict bracket, fall back to the bounded search
            refined = optimize.minimize_scalar(
                lambda x: -r_squared(x), bounds=(left, right), method="bounded",
                options={"xatol": search.tolerance},
            ).x
        if left <= refined <= right and r_squared(refined) >= scores[best]:
            tau0 = float(refined)

    path_tau = np.log(increments + math.exp(tau0))
    path_tau[0] = tau0
    line = _fit(path_tau, time_axis, window, origin)
    logging.info(f"Estimated tau0={tau0:.8f} with trendline R^2={line.r_squared:.6f}, slope={line.slope:.6f}/yr.")
    return TauEstimate(tau0=tau0, trendline=line, at_boundary=at_boundary)


def trendline_value(line: TrendLine, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Evaluates the trendline at t years after its origin (extrapolation allowed)."""
    return line.intercept + line.slope * t


def trendline_at(line: TrendLine, when: pd.Timestamp) -> float:
    """Trendline value at a calendar date."""
    t = (pd.Timestamp(when) - line.time_origin).days / DAYS_PER_YEAR
    return float(trendline_value(line, t))


def trend_frame(path: ActivityTimePath, line: TrendLine) -> pd.DataFrame:
    """Table (date, tau, tau_trend) for plotting the activity time against its trend."""
    t = years_since(path.dates, line.time_origin)
    return pd.DataFrame({"date": path.dates, "tau": path.tau, "tau_trend": trendline_value(line, t)})
