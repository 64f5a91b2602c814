import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from activity_time import ActivityTimePath, TrendLine, trendline_at
from market_data import ObservationSeries
from utils.errors import ConfigError, HedgeDomainError, NumericalError
from utils.helpers import parse_date

ArrayLike = Union[float, np.ndarray]


class FractionSource(str, Enum):
    """Which value the hedge fraction is evaluated at: the portfolio Z or the model price P."""
    PORTFOLIO = "portfolio"
    PRICE = "price"


class CostModel(BaseModel):
    """
    Proportional transaction costs.

    Attributes:
        proportional_rate (float): Cost per unit of traded notional, e.g. 0.005 for 50bp.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    proportional_rate: float = Field(default=0.0, ge=0.0)

    @classmethod
    def from_bp(cls, basis_points: float) -> "CostModel":
        return cls(proportional_rate=basis_points / 10_000.0)


def _price(S: ArrayLike, tau: ArrayLike, tau_bar_T: ArrayLike) -> np.ndarray:
    gap = np.maximum(np.exp(tau_bar_T) - np.exp(tau), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(gap > 0.0, -np.expm1(-np.asarray(S, dtype=float) / (2.0 * gap)), 1.0)


def azcb_price(S: ArrayLike, tau: ArrayLike, tau_bar_T: ArrayLike) -> ArrayLike:
    """
    Benchmark-neutral price of the approximate zero-coupon bond,
    P = 1 - exp(-S / (2 max(e^{tau_bar_T} - e^{tau}, 0))).

    When the activity time has reached its trend value the maximum is 0, the
    exponential term is taken as 0 and the price is 1.

    Args:
        S (ArrayLike): Discounted index value(s), strictly positive.
        tau (ArrayLike): Realized activity time(s).
        tau_bar_T (ArrayLike): Trendline activity time at maturity.

    Returns:
        ArrayLike: Price(s) in (0, 1]; a float for scalar inputs.

    Example:
        azcb_price(2.0 * (math.e - 1.0), 0.0, 1.0)   # 1 - e^-1
    """
    if np.any(np.asarray(S) <= 0):
        raise ValueError("azcb_price requires S > 0")
    price = _price(S, tau, tau_bar_T)
    return float(price) if np.ndim(price) == 0 else price


def azcb_payoff(S_T: ArrayLike, tau_T: ArrayLike, tau_bar_T: ArrayLike) -> ArrayLike:
    """ZCB-type payoff at maturity; the pricing formula evaluated at t_T."""
    return azcb_price(S_T, tau_T, tau_bar_T)


def hedge_fraction(Z: ArrayLike) -> ArrayLike:
    """
    Fraction of wealth held in the index, pi = (1 - 1/Z) ln(1 - Z).

    It equals dP/dS * S / P when evaluated at the bond price, so the same
    function serves the portfolio and the model-price variant.

    Raises:
        HedgeDomainError: if any Z lies outside (0, 1).
    """
    values = np.asarray(Z, dtype=float)
    if np.any((values <= 0.0) | (values >= 1.0)) or np.any(np.isnan(values)):
        raise HedgeDomainError(f"hedge_fraction is defined on (0, 1) only, got {Z}")
    fraction = (1.0 - 1.0 / values) * np.log1p(-values)
    return float(fraction) if fraction.ndim == 0 else fraction


@dataclass(frozen=True)
class AZCBContract:
    """
    One approximate zero-coupon bond experiment.

    Attributes:
        start_index (int): Grid position of the initiation date.
        maturity_index (int): Grid position of the maturity date.
        trendline (TrendLine): Activity-time trend fitted on the first half only.
        tau_bar_T (float): Trendline value at maturity, fixed at initiation.
    """
    start_index: int
    maturity_index: int
    trendline: TrendLine
    tau_bar_T: float

    def __post_init__(self):
        if not self.start_index < self.maturity_index:
            raise ConfigError(f"Contract starts at {self.start_index} but matures at {self.maturity_index}")
        half = self.trendline.fit_window[1]
        if self.start_index < half:
            raise ConfigError(f"Contract initiation {self.start_index} lies inside the fit window ending at {half}")


def locate(dates: pd.DatetimeIndex, when: Union[int, str, pd.Timestamp]) -> int:
    """
    Grid position of a date, snapped forward to the next available observation.
    Integers are taken as positions already.
    """
    if isinstance(when, (int, np.integer)):
        position = int(when)
    else:
        position = int(dates.searchsorted(parse_date(when), side="left"))
    if not 0 <= position < len(dates):
        raise ConfigError(f"{when} lies outside the data grid {dates[0].date()}..{dates[-1].date()}")
    return position


def make_contract(dates: pd.DatetimeIndex, start, maturity, trendline: TrendLine) -> AZCBContract:
    """
    Builds a contract from dates (or grid positions), fixing tau_bar_T from the trendline.

    Example:
        contract = make_contract(S.dates, "1997-12-31", "2025-03-11", estimate.trendline)
    """
    start_index = locate(dates, start)
    maturity_index = locate(dates, maturity)
    tau_bar_T = trendline_at(trendline, dates[maturity_index])
    return AZCBContract(start_index, maturity_index, trendline, tau_bar_T)


@dataclass
class BatchHedge:
    """
    Outcome of hedging many contracts side by side.

    Arrays are indexed by contract. trace, when recorded, maps
    price/portfolio/fraction/cost to arrays of shape (steps, contracts)
    covering grid positions first_index..first_index + steps - 1.
    """
    p_start: np.ndarray
    z_final: np.ndarray
    payoff: np.ndarray
    max_abs_error: np.ndarray
    total_cost: np.ndarray
    first_index: int
    trace: Optional[Dict[str, np.ndarray]] = None

    @property
    def flvr(self) -> np.ndarray:
        return self.z_final - self.p_start


def hedge_contracts(
    S: np.ndarray,
    tau: np.ndarray,
    starts,
    maturities,
    tau_bars,
    costs: CostModel = CostModel(),
    fraction_source: FractionSource = FractionSource.PORTFOLIO,
    record: bool = False,
) -> BatchHedge:
    """
    Runs the discrete self-financing AZCB hedge for many contracts at once.

    Time is stepped once over the union of all contract lives; each step
    updates every live contract with vector arithmetic. S and tau are either
    one shared series of shape (steps,) or one column per contract of shape
    (steps, contracts), e.g. simulated paths.

    Per contract: Z_start = P_start; Z_i = W_{i-1} (1 + pi_{i-1} (S_i/S_{i-1} - 1))
    with W the wealth after paying costs (W = Z without costs). Once Z >= 1 the
    portfolio is frozen in the savings account for good. Costs are the
    proportional rate times the absolute change in stock notional, including
    the initial purchase and the final liquidation.

    Args:
        S (np.ndarray): Discounted index values.
        tau (np.ndarray): Realized activity time on the same grid.
        starts: Initiation grid positions.
        maturities: Maturity grid positions.
        tau_bars: Trendline activity time at each contract's maturity.
        costs (CostModel): Proportional costs.
        fraction_source (FractionSource): Evaluate pi at Z (default) or at P.
        record (bool): Keep the per-step trace (memory grows with steps x contracts).

    Returns:
        BatchHedge: Per-contract outcomes and the optional trace.
    """
    S = np.asarray(S, dtype=float)
    tau = np.asarray(tau, dtype=float)
    starts = np.atleast_1d(np.asarray(starts, dtype=int))
    maturities = np.atleast_1d(np.asarray(maturities, dtype=int))
    tau_bars = np.atleast_1d(np.asarray(tau_bars, dtype=float))
    m = len(starts)
    if not (len(maturities) == m and len(tau_bars) == m):
        raise ConfigError("starts, maturities and tau_bars must have equal length")
    if np.any(starts >= maturities):
        raise ConfigError("every contract must start before it matures")
    if starts.min() < 0 or maturities.max() >= len(S):
        raise ConfigError("contract positions exceed the data grid")

    rate = costs.proportional_rate
    use_price = FractionSource(fraction_source) is FractionSource.PRICE
    first, last = int(starts.min()), int(maturities.max())

    portfolio = np.zeros(m)
    wealth = np.zeros(m)
    fraction = np.zeros(m)
    holding = np.zeros(m)
    frozen = np.zeros(m, dtype=bool)
    p_start = np.zeros(m)
    payoff = np.zeros(m)
    max_err = np.zeros(m)
    total_cost = np.zeros(m)
    trace = {name: [] for name in ("price", "portfolio", "fraction", "cost")} if record else None

    for i in range(first, last + 1):
        price = np.broadcast_to(_price(S[i], tau[i], tau_bars), (m,))
        live = (starts < i) & (i <= maturities)
        born = starts == i

        if live.any():
            growth = np.broadcast_to(S[i] / S[i - 1], (m,))[live]
            portfolio[live] = wealth[live] * (1.0 + fraction[live] * (growth - 1.0))
            holding[live] = holding[live] * growth
        if born.any():
            p_start[born] = price[born]
            portfolio[born] = price[born]
            holding[born] = 0.0

        active = live | born
        trading = active & (i < maturities)
        ending = active & (i == maturities)

        frozen |= trading & (portfolio >= 1.0)
        base = price if use_price else portfolio
        hedging = trading & ~frozen & (base < 1.0)
        new_fraction = np.zeros(m)
        if hedging.any():
            new_fraction[hedging] = hedge_fraction(base[hedging])

        trade = np.zeros(m)
        trade[trading] = np.abs(new_fraction[trading] * portfolio[trading] - holding[trading])
        trade[ending] = np.abs(holding[ending])
        cost = rate * trade

        wealth[trading] = portfolio[trading] - cost[trading]
        portfolio[ending] = portfolio[ending] - cost[ending]
        broke = (trading & (wealth <= 0.0)) | (ending & (portfolio <= 0.0))
        if broke.any():
            k = int(np.argmax(broke))
            raise NumericalError(f"Transaction costs drove contract {k} to nonpositive wealth at step {i}")

        fraction[trading] = new_fraction[trading]
        holding[trading] = new_fraction[trading] * wealth[trading]
        fraction[ending] = 0.0
        holding[ending] = 0.0

        max_err[active] = np.maximum(max_err[active], np.abs(price[active] - portfolio[active]))
        total_cost[active] += cost[active]
        payoff[ending] = price[ending]

        if record:
            trace["price"].append(price.copy())
            trace["portfolio"].append(portfolio.copy())
            trace["fraction"].append(fraction.copy())
            trace["cost"].append(cost)

    if record:
        trace = {name: np.vstack(rows) for name, rows in trace.items()}
    return BatchHedge(
        p_start=p_start,
        z_final=portfolio.copy(),
        payoff=payoff,
        max_abs_error=max_err,
        total_cost=total_cost,
        first_index=first,
        trace=trace,
    )


@dataclass
class HedgeLedger:
    """
    Step-by-step record of one AZCB hedge from initiation to maturity.

    Columns follow the data grid: S, realized tau, model price P, portfolio Z,
    index fraction pi chosen at that step, hedge error C = P - Z,
    potential FLVR V = Z - P_start and the transaction cost paid.
    """
    dates: pd.DatetimeIndex
    S: np.ndarray
    tau: np.ndarray
    price: np.ndarray
    portfolio: np.ndarray
    fraction: np.ndarray
    cost_paid: np.ndarray
    tau_bar_T: float
    payoff: float
    error: np.ndarray = field(init=False)
    flvr: np.ndarray = field(init=False)

    def __post_init__(self):
        self.error = self.price - self.portfolio
        self.flvr = self.portfolio - self.portfolio[0]

    @property
    def p_start(self) -> float:
        return float(self.price[0])

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self.error)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "date": self.dates,
            "S": self.S,
            "tau": self.tau,
            "P": self.price,
            "Z": self.portfolio,
            "pi": self.fraction,
            "C": self.error,
            "V": self.flvr,
            "cost": self.cost_paid,
        })

    def summary(self) -> Dict[str, float]:
        """
        Headline numbers of the experiment. The discounted risk-neutral price
        of a bond paying one savings-account unit is 1, so 1 - P_start is the
        saving of the benchmark-neutral price.
        """
        v_maturity, max_abs_error = flvr_outcome(self)
        return {
            "start": str(self.dates[0].date()),
            "maturity": str(self.dates[-1].date()),
            "steps": len(self.dates) - 1,
            "tau_bar_T": self.tau_bar_T,
            "p_start": self.p_start,
            "payoff": self.payoff,
            "z_maturity": float(self.portfolio[-1]),
            "flvr_maturity": v_maturity,
            "max_abs_error": max_abs_error,
            "total_cost": float(np.sum(self.cost_paid)),
            "risk_neutral_saving": 1.0 - self.p_start,
        }


class FLVROutcome(NamedTuple):
    v_maturity: float
    max_abs_error: float


def run_hedge(
    contract: AZCBContract,
    S: ObservationSeries,
    tau: ActivityTimePath,
    costs: CostModel = CostModel(),
    fraction_source: FractionSource = FractionSource.PORTFOLIO,
) -> HedgeLedger:
    """
    Prices and hedges one AZCB over its life.

    Args:
        contract (AZCBContract): Initiation, maturity and fixed tau_bar_T.
        S (ObservationSeries): Discounted index over the full history.
        tau (ActivityTimePath): Activity time computed from t_0 on the same grid.
        costs (CostModel): Proportional transaction costs.
        fraction_source (FractionSource): Evaluate pi at Z (default) or at P.

    Returns:
        HedgeLedger: The per-step ledger.

    Example:
        ledger = run_hedge(make_contract(S.dates, "1997-12-31", "2025-03-11", line), S, tau)
    """
    if len(S) != len(tau) or not S.dates.equals(tau.dates):
        raise ConfigError("Index and activity time must share the same date grid")
    if contract.maturity_index >= len(S):
        raise ConfigError(f"Maturity position {contract.maturity_index} exceeds the grid of {len(S)} dates")

    batch = hedge_contracts(
        S.values, tau.tau,
        [contract.start_index], [contract.maturity_index], [contract.tau_bar_T],
        costs=costs, fraction_source=fraction_source, record=True,
    )
    window = slice(contract.start_index, contract.maturity_index + 1)
    ledger = HedgeLedger(
        dates=S.dates[window],
        S=S.values[window],
        tau=tau.tau[window],
        price=batch.trace["price"][:, 0],
        portfolio=batch.trace["portfolio"][:, 0],
        fraction=batch.trace["fraction"][:, 0],
        cost_paid=batch.trace["cost"][:, 0],
        tau_bar_T=contract.tau_bar_T,
        payoff=float(batch.payoff[0]),
    )
    logging.info(
        f"Hedged AZCB {ledger.dates[0].date()} -> {ledger.dates[-1].date()}: "
        f"P_start={ledger.p_start:.6f}, V_T={ledger.flvr[-1]:.6f}, max|C|={ledger.max_abs_error:.6f}"
    )
    return ledger


def flvr_outcome(ledger: HedgeLedger) -> FLVROutcome:
    """Potential FLVR at maturity and the largest absolute hedge error over the life."""
    return FLVROutcome(float(ledger.flvr[-1]), ledger.max_abs_error)
