import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from azcb import CostModel, azcb_price, hedge_contracts
from utils.errors import ConfigError, NumericalError, SamplerDomainError
from utils.parallel import run_parallel

# Counts must fit in int64
MAX_POISSON_RATE = 1e18

# Above this rate Poisson counts come from the normal limit (skewness below 1e-5)
NORMAL_POISSON_RATE = 1e10


class SimConfig(BaseModel):
    """
    Settings of a minimal-market-model simulation.

    The activity time is deterministic and linear, tau_t = tau0 + slope * t,
    and the discounted GOP S is a squared Bessel process of dimension 4 in
    phi = e^tau time.

    Attributes:
        s0 (float): Initial discounted GOP value.
        tau0 (float): Initial activity time.
        slope (float): Activity-time growth per year.
        horizon (float): Simulated years.
        step (float): Target step in years; the grid uses horizon / round(horizon / step).
        n_paths (int): Number of paths.
        seed (int): Root seed of the random streams.
        block_size (int): Paths per random stream (and per parallel task).
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    s0: float = Field(default=1.0, gt=0)
    tau0: float = 0.0
    slope: float = Field(default=0.05, gt=0)
    horizon: float = Field(default=10.0, gt=0)
    step: float = Field(default=1.0 / 252.0, gt=0)
    n_paths: int = Field(default=10_000, ge=1)
    seed: int = Field(default=20250311, ge=0)
    block_size: int = Field(default=10_000, ge=1)

    @model_validator(mode="after")
    def _fits_horizon(self):
        if self.horizon < self.step:
            raise ValueError(f"horizon {self.horizon} is shorter than one step {self.step}")
        return self

    @property
    def n_steps(self) -> int:
        return max(int(round(self.horizon / self.step)), 1)


@dataclass(frozen=True)
class SimPath:
    times: np.ndarray
    S: np.ndarray
    tau: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class SimPathSet:
    """
    Paths on a shared time grid.

    Attributes:
        times (np.ndarray): Years since the start, shape (steps + 1,).
        tau (np.ndarray): Activity time on the grid.
        phi (np.ndarray): e^tau on the grid.
        S (np.ndarray): Discounted GOP, shape (steps + 1, n_paths).
        mixing (np.ndarray): Poisson count of every transition, shape (steps, n_paths).
        config (SimConfig): Settings that produced the paths.
    """
    times: np.ndarray
    tau: np.ndarray
    phi: np.ndarray
    S: np.ndarray
    mixing: Optional[np.ndarray]
    config: SimConfig

    def __len__(self) -> int:
        return self.S.shape[1]

    def __getitem__(self, j: int) -> SimPath:
        return SimPath(self.times, self.S[:, j], self.tau, self.phi)

    def __iter__(self) -> Iterator[SimPath]:
        return (self[j] for j in range(len(self)))

    def to_frame(self, max_paths: int = 10) -> pd.DataFrame:
        """Long table (path, t, tau, S) of the first max_paths paths."""
        k = min(max_paths, len(self))
        steps = len(self.times)
        return pd.DataFrame({
            "path": np.repeat(np.arange(k), steps),
            "t": np.tile(self.times, k),
            "tau": np.tile(self.tau, k),
            "S": self.S[:, :k].T.ravel(),
        })


@dataclass(frozen=True)
class OracleEstimate:
    estimate: float
    std_error: float
    closed_form: float
    z_score: float
    n_paths: int
    crude_estimate: float

    def to_dict(self) -> dict:
        return {
            "closed_form": self.closed_form,
            "mc_estimate": self.estimate,
            "std_error": self.std_error,
            "z_score": self.z_score,
            "n_paths": self.n_paths,
            "crude_estimate": self.crude_estimate,
        }


@dataclass(frozen=True)
class ConvergenceRow:
    step: float
    mean_max_abs_error: float
    std_error: float
    n_rebalances: int


def _poisson_counts(rate, rng: np.random.Generator):
    large = np.asarray(rate) > NORMAL_POISSON_RATE
    if not np.any(large):
        return rng.poisson(rate)
    # rng.poisson loses its accuracy for such rates
    exact = rng.poisson(np.where(large, 0.0, rate))
    normal = np.rint(rate + np.sqrt(rate) * rng.standard_normal(np.shape(rate))).astype(np.int64)
    return np.where(large, normal, exact)


def sample_besq4_transition(x, dphi, rng: np.random.Generator, return_mixing: bool = False):
    """
    Draws the exact BESQ(4) transition over a phi-time increment.

    Given S = x, the next value is dphi times a noncentral chi-square with 4
    degrees of freedom and noncentrality x / dphi, drawn as a Poisson
    mixture of gammas: N ~ Poisson(x / (2 dphi)), next = dphi * Gamma(2 + N, 2).
    Counts at rates above NORMAL_POISSON_RATE come from the normal limit.

    Args:
        x: Current value(s), strictly positive.
        dphi: Increment of e^tau, strictly positive.
        rng (np.random.Generator): Random stream.
        return_mixing (bool): Also return the Poisson counts.

    Returns:
        The next value(s), and the counts when return_mixing is set.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise SamplerDomainError("BESQ4 transitions start from positive values only")
    if np.any(np.asarray(dphi) <= 0.0):
        raise SamplerDomainError("phi increments must be positive")
    rate = x / (2.0 * dphi)
    if np.any(rate > MAX_POISSON_RATE):
        raise SamplerDomainError(
            f"phi increment {np.min(dphi):.3g} is too small for S={np.max(x):.3g}; use a larger step or slope"
        )
    counts = _poisson_counts(rate, rng)
    sample = dphi * rng.gamma(shape=2.0 + counts, scale=2.0)
    if np.ndim(sample) == 0:
        sample, counts = float(sample), int(counts)
    return (sample, counts) if return_mixing else sample


def time_grid(config: SimConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Times, activity time and phi = e^tau on the simulation grid."""
    times = np.linspace(0.0, config.horizon, config.n_steps + 1)
    tau = config.tau0 + config.slope * times
    return times, tau, np.exp(tau)


def phi_increments(times: np.ndarray, tau0: float, slope: float) -> np.ndarray:
    """
    e^tau(t_k+1) - e^tau(t_k) as e^tau(t_k) expm1(slope dt), which keeps full
    relative precision when slope dt is tiny.
    """
    times = np.asarray(times, dtype=float)
    return np.exp(tau0 + slope * times[:-1]) * np.expm1(slope * np.diff(times))


def _simulate_block(s0: float, dphi: np.ndarray, seed: np.random.SeedSequence, size: int):
    rng = np.random.default_rng(seed)
    S = np.empty((len(dphi) + 1, size))
    mixing = np.empty((len(dphi), size), dtype=np.int64)
    S[0] = s0
    for k, increment in enumerate(dphi):
        S[k + 1], mixing[k] = sample_besq4_transition(S[k], increment, rng, return_mixing=True)
    return S, mixing


def simulate_paths(config: SimConfig, workers: int = 1) -> SimPathSet:
    """
    Simulates config.n_paths paths with exact transitions.

    Paths are split into blocks of block_size; block b draws from child b of
    SeedSequence(seed), so the paths for a given seed do not depend on the
    number of workers.
    """
    times, tau, phi = time_grid(config)
    dphi = phi_increments(times, config.tau0, config.slope)
    n_blocks = math.ceil(config.n_paths / config.block_size)
    children = np.random.SeedSequence(config.seed).spawn(n_blocks)
    sizes = [min(config.block_size, config.n_paths - b * config.block_size) for b in range(n_blocks)]
    blocks = run_parallel(
        _simulate_block, [(config.s0, dphi, child, size) for child, size in zip(children, sizes)], workers
    )
    S = np.concatenate([b[0] for b in blocks], axis=1)
    mixing = np.concatenate([b[1] for b in blocks], axis=1)
    if np.any(S <= 0.0):
        raise NumericalError("Simulated a nonpositive value; the transition sampler underflowed")
    logging.info(f"Simulated {config.n_paths} paths of {config.n_steps} steps in {n_blocks} block(s).")
    return SimPathSet(times=times, tau=tau, phi=phi, S=S, mixing=mixing, config=config)


def gop_volatility(S, tau, slope: float):
    """Volatility of the GOP, theta = sqrt(4 e^tau a / S)."""
    return np.sqrt(4.0 * np.exp(tau) * slope / np.asarray(S, dtype=float))


def _grid_position(times: np.ndarray, t: float) -> int:
    position = int(np.argmin(np.abs(times - t)))
    if not math.isclose(times[position], t, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError(f"Time {t} is not on the simulation grid")
    return position


def mc_zcb_price(paths: SimPathSet, S_t: float, t: float, T: float) -> OracleEstimate:
    """
    Monte-Carlo estimate of the ZCB price S_t E[1/S_T] against its closed form.

    1/S_T has infinite variance under BESQ(4), so the estimate conditions on
    the Poisson count N of the last transition into T:
    E[1/S_T | N] = 1 / (2 dphi (1 + N)). The crude mean of S_t / S_T is
    reported alongside.

    Args:
        paths (SimPathSet): Paths that all pass through S_t at time t.
        S_t (float): Discounted GOP at t.
        t (float): Valuation time on the grid.
        T (float): Maturity on the grid, after t.

    Returns:
        OracleEstimate: Estimate, standard error, closed form and z-score.

    Example:
        mc_zcb_price(simulate_paths(config), config.s0, 0.0, config.horizon)
    """
    i_t, i_T = _grid_position(paths.times, t), _grid_position(paths.times, T)
    if not i_t < i_T:
        raise ConfigError(f"Maturity {T} must come after the valuation time {t}")
    if not np.allclose(paths.S[i_t], S_t, rtol=1e-12, atol=0.0):
        raise ConfigError(f"Paths do not pass through S_t={S_t} at t={t}")

    n = len(paths)
    crude = S_t / paths.S[i_T]
    if paths.mixing is not None:
        dphi = phi_increments(paths.times[i_T - 1:i_T + 1], paths.config.tau0, paths.config.slope)[0]
        samples = S_t / (2.0 * dphi * (1.0 + paths.mixing[i_T - 1]))
    else:
        samples = crude
    estimate = float(np.mean(samples))
    std_error = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    closed_form = azcb_price(S_t, paths.tau[i_t], paths.tau[i_T])
    gap = estimate - closed_form
    if std_error > 0.0:
        z_score = gap / std_error
    else:
        z_score = 0.0 if gap == 0.0 else math.copysign(math.inf, gap)
    logging.info(f"ZCB oracle: closed form {closed_form:.7f}, MC {estimate:.7f} +- {std_error:.2e} (z={z_score:.2f}).")
    return OracleEstimate(estimate, std_error, closed_form, z_score, n, float(np.mean(crude)))


def _hedge_paths(paths: SimPathSet, costs: CostModel, record: bool = False):
    n = len(paths)
    last = len(paths.times) - 1
    return hedge_contracts(
        paths.S, paths.tau,
        starts=np.zeros(n, dtype=int),
        maturities=np.full(n, last),
        tau_bars=np.full(n, paths.tau[-1]),
        costs=costs,
        record=record,
    )


def hedge_convergence_experiment(
    config: SimConfig, step_sizes: Sequence[float], costs: CostModel = CostModel()
) -> List[ConvergenceRow]:
    """
    Hedges the ZCB maturing at the horizon on simulated paths, once per step size.

    The trendline is exact, tau_bar_T = tau0 + slope * horizon, so the only
    hedge error left is the one from rebalancing at discrete times.

    Raises:
        ConfigError: unless step_sizes is strictly decreasing.
    """
    steps = [float(h) for h in step_sizes]
    if not steps or any(b >= a for a, b in zip(steps, steps[1:])):
        raise ConfigError(f"Step sizes must be strictly decreasing, got {steps}")

    rows: List[ConvergenceRow] = []
    for h in steps:
        paths = simulate_paths(config.model_copy(update={"step": h}))
        errors = _hedge_paths(paths, costs).max_abs_error
        n = len(errors)
        std_error = float(np.std(errors, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append(ConvergenceRow(h, float(np.mean(errors)), std_error, len(paths.times) - 1))
        logging.info(f"Step {h:.6g}: mean max|C| = {rows[-1].mean_max_abs_error:.3e} over {n} paths.")
    return rows


def convergence_frame(rows: Sequence[ConvergenceRow]) -> pd.DataFrame:
    return pd.DataFrame([vars(r) for r in rows])


def benchmarked_drift_zscore(config: SimConfig, at: float = 0.5) -> float:
    """
    z-score of the mean increment of the benchmarked hedge portfolio Z/S
    from the start to the fraction `at` of the horizon. Values within a few
    units are consistent with Z/S being a martingale.
    """
    if not 0.0 < at <= 1.0:
        raise ConfigError(f"Checkpoint must lie in (0, 1], got {at}")
    paths = simulate_paths(config)
    portfolio = _hedge_paths(paths, CostModel(), record=True).trace["portfolio"]
    mid = max(int(round(at * (len(paths.times) - 1))), 1)
    increments = portfolio[mid] / paths.S[mid] - portfolio[0] / paths.S[0]
    n = len(increments)
    if n < 2:
        raise ConfigError("The drift check needs at least 2 paths")
    spread = float(np.std(increments, ddof=1))
    if spread == 0.0:
        return 0.0
    return float(np.mean(increments) / (spread / math.sqrt(n)))
