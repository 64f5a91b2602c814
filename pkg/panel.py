import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import optimize, special

from activity_time import ActivityTimePath, TrendLine
from azcb import AZCBContract, BatchHedge, CostModel, FractionSource, hedge_contracts, make_contract
from market_data import ObservationSeries
from utils.errors import ConfigError, DataError, FLVRError, NumericalError
from utils.helpers import parse_date
from utils.parallel import run_parallel

DEFAULT_BINS = 50

# Contracts in the published S&P 500 panel
REFERENCE_PANEL_SIZE = 8475


class TermRange(BaseModel):
    """Monthly terms to maturity, inclusive; the study uses 15 to 17 years."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    min_months: int = Field(default=180, ge=1)
    max_months: int = Field(default=204, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.min_months > self.max_months:
            raise ValueError(f"term range is empty: {self.min_months} > {self.max_months} months")
        return self

    def months(self) -> range:
        return range(self.min_months, self.max_months + 1)


class InitiationWindow(BaseModel):
    """Optional calendar bounds for initiation dates (inclusive)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    start: Optional[str] = None
    end: Optional[str] = None

    @field_validator("start", "end")
    @classmethod
    def _is_date(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            try:
                parse_date(value)
            except ConfigError as e:
                raise ValueError(str(e)) from e
        return value


@dataclass
class PanelSpec:
    contracts: List[AZCBContract]
    term_months: np.ndarray
    costs: CostModel
    terms: TermRange

    def __len__(self) -> int:
        return len(self.contracts)


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray


@dataclass
class PanelResult:
    """
    Cross-section of AZCB experiments and their aggregates.

    s_v and error_std are None for a single contract (sample std undefined).
    """
    start_dates: pd.DatetimeIndex
    maturity_dates: pd.DatetimeIndex
    term_months: np.ndarray
    p_start: np.ndarray
    flvr: np.ndarray
    max_abs_error: np.ndarray
    total_cost: np.ndarray
    bins: int = DEFAULT_BINS
    n: int = field(init=False)
    m_v: float = field(init=False)
    s_v: Optional[float] = field(init=False)
    error_max: float = field(init=False)
    error_std: Optional[float] = field(init=False)
    positive_fraction: float = field(init=False)
    min_flvr: float = field(init=False)
    flvr_histogram: Histogram = field(init=False)
    error_histogram: Histogram = field(init=False)

    def __post_init__(self):
        self.n = len(self.flvr)
        self.m_v, self.s_v = mean_and_std(self.flvr)
        self.error_max = float(np.max(self.max_abs_error))
        _, self.error_std = mean_and_std(self.max_abs_error)
        self.positive_fraction = float(np.mean(self.flvr > 0.0))
        self.min_flvr = float(np.min(self.flvr))
        self.flvr_histogram = Histogram(*np.histogram(self.flvr, bins=self.bins))
        self.error_histogram = Histogram(*np.histogram(self.max_abs_error, bins=self.bins))
        if self.s_v is None:
            logging.warning("Panel holds a single contract; the sample standard deviation is undefined.")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "contract_id": np.arange(self.n),
            "start": self.start_dates,
            "maturity": self.maturity_dates,
            "term_months": self.term_months,
            "p_start": self.p_start,
            "V": self.flvr,
            "max_abs_error": self.max_abs_error,
            "total_cost": self.total_cost,
        })

    def summary(self) -> dict:
        return {
            "n": self.n,
            "m_V": self.m_v,
            "s_V": self.s_v,
            "max_abs_error_max": self.error_max,
            "max_abs_error_std": self.error_std,
            "positive_fraction": self.positive_fraction,
            "min_V": self.min_flvr,
        }


@dataclass(frozen=True)
class TestReport:
    """
    One-sided Student-t test of H0: mu = 0 against H1: mu > 0.

    reject uses T >= t(1-alpha, n-1); reject_by_threshold uses
    m_V >= t(1-alpha, n-1) s_V / sqrt(n). Both forms agree.
    """
    __test__ = False

    statistic: float
    alpha: float
    df: int
    critical_value: float
    threshold: float
    m_v: float
    s_v: float
    n: int
    reject: bool
    reject_by_threshold: bool

    def to_dict(self) -> dict:
        return {
            "T": self.statistic,
            "alpha": self.alpha,
            "df": self.df,
            "critical_value": self.critical_value,
            "threshold": self.threshold,
            "m_V": self.m_v,
            "s_V": self.s_v,
            "n": self.n,
            "reject_H0": self.reject,
            "reject_H0_by_threshold": self.reject_by_threshold,
        }


@dataclass(frozen=True)
class CostSensitivityRow:
    cost_bp: float
    m_v: float
    s_v: Optional[float]
    ratio_to_zero_cost: float
    reject: Optional[bool]


def mean_and_std(values: np.ndarray):
    """
    Sample mean by exactly rounded summation and two-pass sample standard
    deviation, so results do not depend on the order of the values.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise DataError("Cannot summarize an empty sample")
    mean = math.fsum(values) / n
    if n < 2:
        return mean, None
    variance = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(variance)


def month_start_positions(dates: pd.DatetimeIndex) -> np.ndarray:
    """Grid positions of the first available date of every calendar month."""
    months = dates.to_period("M")
    _, first = np.unique(months.asi8, return_index=True)
    return np.sort(first)


def build_panel(
    data: ObservationSeries,
    trendline: TrendLine,
    terms: TermRange = TermRange(),
    costs: CostModel = CostModel(),
    window: InitiationWindow = InitiationWindow(),
    reference_count: Optional[int] = None,
) -> PanelSpec:
    """
    Enumerates every (month start, term) contract that fits in the data.

    Initiations are month starts on or after the end of the fit window (and
    inside the optional calendar window). A term of m months matures on the
    same day of the month m months later, snapped forward to the next available
    date; contracts whose maturity falls beyond the last date are dropped.

    Args:
        data (ObservationSeries): Discounted index supplying the date grid.
        trendline (TrendLine): Trend fitted on the first half.
        terms (TermRange): Inclusive monthly term range.
        costs (CostModel): Costs applied when the panel is run.
        window (InitiationWindow): Optional initiation date bounds.
        reference_count (int): Expected contract count to compare with, if any.

    Returns:
        PanelSpec: The contracts in (initiation, term) order.
    """
    dates = data.dates
    half = trendline.fit_window[1]
    positions = month_start_positions(dates)
    positions = positions[positions >= half]
    if window.start is not None:
        positions = positions[dates[positions] >= parse_date(window.start, "initiation window start")]
    if window.end is not None:
        positions = positions[dates[positions] <= parse_date(window.end, "initiation window end")]

    contracts: List[AZCBContract] = []
    months: List[int] = []
    last_date = dates[-1]
    for p in positions:
        for m in terms.months():
            target = dates[p] + pd.DateOffset(months=m)
            if target > last_date:
                continue
            contracts.append(make_contract(dates, int(p), target, trendline))
            months.append(m)

    if not contracts:
        raise DataError(
            f"Panel is empty: no month start from {dates[half].date()} leaves {terms.min_months} months before {last_date.date()}"
        )
    logging.info(f"Panel holds {len(contracts)} contracts over {len(positions)} initiation months.")
    if reference_count is not None and len(contracts) != reference_count:
        logging.warning(f"Panel size {len(contracts)} differs from the reference count {reference_count}.")
    return PanelSpec(contracts=contracts, term_months=np.asarray(months), costs=costs, terms=terms)


def run_panel(
    spec: PanelSpec,
    S: ObservationSeries,
    tau: ActivityTimePath,
    workers: int = 1,
    chunk_size: int = 2048,
    fraction_source: FractionSource = FractionSource.PORTFOLIO,
    bins: int = DEFAULT_BINS,
) -> PanelResult:
    """
    Hedges every contract of the panel and aggregates the outcomes.

    Contracts are hedged in chunks (in parallel when workers > 1); every
    contract's arithmetic is independent of its chunk, so the result is
    bit-identical for any chunking or worker count.

    Raises:
        NumericalError: naming the first contract whose hedge failed.
    """
    starts = np.array([c.start_index for c in spec.contracts])
    maturities = np.array([c.maturity_index for c in spec.contracts])
    tau_bars = np.array([c.tau_bar_T for c in spec.contracts])

    bounds = range(0, len(starts), chunk_size)
    calls = [
        (S.values, tau.tau, starts[b:b + chunk_size], maturities[b:b + chunk_size], tau_bars[b:b + chunk_size],
         spec.costs, fraction_source)
        for b in bounds
    ]
    try:
        batches: List[BatchHedge] = run_parallel(hedge_contracts, calls, workers)
    except FLVRError as e:
        raise NumericalError(f"Panel aborted: {e}") from e

    for b, batch in zip(bounds, batches):
        failed = ~np.isfinite(batch.z_final)
        if failed.any():
            k = b + int(np.argmax(failed))
            raise NumericalError(f"Contract {k} ({S.dates[starts[k]].date()}) produced a non-finite portfolio")

    result = PanelResult(
        start_dates=S.dates[starts],
        maturity_dates=S.dates[maturities],
        term_months=spec.term_months,
        p_start=np.concatenate([b.p_start for b in batches]),
        flvr=np.concatenate([b.flvr for b in batches]),
        max_abs_error=np.concatenate([b.max_abs_error for b in batches]),
        total_cost=np.concatenate([b.total_cost for b in batches]),
        bins=bins,
    )
    logging.info(
        f"Panel of {result.n}: m_V={result.m_v:.4f}, s_V={result.s_v}, max|C|={result.error_max:.6f}, "
        f"positive={result.positive_fraction:.2%}"
    )
    return result


def student_t_sf(x: float, df: float) -> float:
    """Upper tail P(T > x) of Student's t through the regularized incomplete beta function."""
    tail = 0.5 * special.betainc(0.5 * df, 0.5, df / (df + x * x))
    return float(tail) if x >= 0 else float(1.0 - tail)


def student_t_cdf(x: float, df: float) -> float:
    """P(T <= x) of Student's t with df degrees of freedom."""
    tail = 0.5 * special.betainc(0.5 * df, 0.5, df / (df + x * x))
    return float(1.0 - tail) if x >= 0 else float(tail)


def student_t_quantile(p: float, df: float) -> float:
    """
    Inverse of the Student-t CDF, found by root-finding on the upper tail.

    Args:
        p (float): Probability in (0, 1).
        df (float): Degrees of freedom, >= 1.

    Returns:
        float: x with CDF(x) = p to 1e-9.

    Example:
        student_t_quantile(0.75, 1)          # 1.0, the Cauchy quartile
        student_t_quantile(1 - 1e-6, 8474)   # about 4.757
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"Quantile probability must lie in (0, 1), got {p}")
    if df < 1:
        raise ConfigError(f"Degrees of freedom must be at least 1, got {df}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -student_t_quantile(1.0 - p, df)

    tail = 1.0 - p
    upper = 1.0
    while student_t_sf(upper, df) > tail:
        upper *= 2.0
    return float(optimize.brentq(lambda x: student_t_sf(x, df) - tail, 0.0, upper, xtol=1e-13, maxiter=500))


def _at_least(value: float, bound: float) -> bool:
    return value >= bound or math.isclose(value, bound, rel_tol=1e-12, abs_tol=0.0)


def t_test_from_stats(m_v: float, s_v: float, n: int, alpha: float) -> TestReport:
    """
    Student-t test from summary statistics.

    Example:
        t_test_from_stats(0.1680, 0.1135, 8475, 1e-6).threshold   # about 0.0059
    """
    if n < 2:
        raise DataError(f"The t-test needs at least 2 observations, got {n}")
    if s_v is None or s_v <= 0.0:
        raise NumericalError(f"Degenerate sample: standard deviation {s_v}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"Significance level must lie in (0, 1), got {alpha}")

    standard_error = s_v / math.sqrt(n)
    statistic = m_v / standard_error
    critical = student_t_quantile(1.0 - alpha, n - 1)
    threshold = critical * standard_error
    reject = _at_least(statistic, critical)
    reject_by_threshold = _at_least(m_v, threshold)
    if reject != reject_by_threshold:
        logging.warning(f"T-form and threshold-form decisions disagree at T={statistic}, t={critical}")
    return TestReport(
        statistic=statistic, alpha=alpha, df=n - 1, critical_value=critical, threshold=threshold,
        m_v=m_v, s_v=s_v, n=n, reject=reject, reject_by_threshold=reject_by_threshold,
    )


def t_test(result: PanelResult, alpha: float = 1e-6) -> TestReport:
    """Tests H0: mu = 0 against mu > 0 on the panel's FLVRs at maturity."""
    report = t_test_from_stats(result.m_v, result.s_v, result.n, alpha)
    verdict = "rejected" if report.reject else "not rejected"
    logging.info(f"H0 {verdict}: T={report.statistic:.3f}, t(1-{alpha}, {report.df})={report.critical_value:.4f}")
    return report


def cost_sensitivity(
    spec: PanelSpec,
    S: ObservationSeries,
    tau: ActivityTimePath,
    cost_bps: Sequence[float],
    alpha: float = 1e-6,
    workers: int = 1,
    chunk_size: int = 2048,
    fraction_source: FractionSource = FractionSource.PORTFOLIO,
) -> List[CostSensitivityRow]:
    """
    Reruns the panel at several proportional cost levels.

    Each row reports the mean FLVR, its ratio to the zero-cost mean and the
    t-test decision at that cost level. Pass the fraction source the panel
    itself was hedged with so that the 0bp row reproduces it.
    """
    levels = sorted(set([0.0] + [float(bp) for bp in cost_bps]))
    rows: List[CostSensitivityRow] = []
    baseline = None
    for bp in levels:
        costed = PanelSpec(spec.contracts, spec.term_months, CostModel.from_bp(bp), spec.terms)
        result = run_panel(costed, S, tau, workers=workers, chunk_size=chunk_size, fraction_source=fraction_source)
        if baseline is None:
            baseline = result.m_v
        reject = t_test(result, alpha).reject if result.n >= 2 and result.s_v else None
        ratio = result.m_v / baseline if baseline else float("nan")
        rows.append(CostSensitivityRow(bp, result.m_v, result.s_v, ratio, reject))
        logging.info(f"{bp:g}bp costs: m_V={result.m_v:.4f} ({ratio:.1%} of zero-cost mean)")
    return rows


def histogram_frame(histogram: Histogram) -> pd.DataFrame:
    """Histogram as a CSV-ready table of bin edges and counts."""
    return pd.DataFrame({
        "bin_left": histogram.edges[:-1],
        "bin_right": histogram.edges[1:],
        "count": histogram.counts,
    })
