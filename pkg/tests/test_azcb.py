import math
import unittest

import numpy as np
import pandas as pd

from activity_time import TrendLine, activity_time
from azcb import (
    AZCBContract,
    CostModel,
    FractionSource,
    azcb_payoff,
    azcb_price,
    flvr_outcome,
    hedge_contracts,
    hedge_fraction,
    locate,
    make_contract,
    run_hedge,
)
from market_data import ObservationSeries, SeriesRole
from mmm_sim import SimConfig, simulate_paths
from utils.errors import ConfigError, HedgeDomainError, NumericalError


def flat_trend(dates, level, fit_end=2):
    return TrendLine(level, 0.0, 1.0, (0, fit_end), dates[0])


def zigzag_series(n=41):
    dates = pd.bdate_range("2001-01-01", periods=n)
    moves = np.where(np.arange(n - 1) % 3 == 0, 1.03, 0.985)
    values = np.concatenate(([1.0], np.cumprod(moves)))
    return ObservationSeries(dates=dates, values=values, role=SeriesRole.DISCOUNTED)


class TestPricing(unittest.TestCase):
    def test_gap_of_half_the_index_prices_at_one_minus_inverse_e(self):
        self.assertAlmostEqual(azcb_price(2.0 * (math.e - 1.0), 0.0, 1.0), 1.0 - math.exp(-1.0), places=15)

    def test_reached_trend_prices_at_par(self):
        self.assertEqual(azcb_price(1.0, 0.7, 0.7), 1.0)
        self.assertEqual(azcb_price(1.0, 0.9, 0.7), 1.0)
        self.assertEqual(azcb_payoff(3.0, 1.0, 1.0), 1.0)

    def test_small_index_prices_near_zero(self):
        gap = math.exp(1.0) - 1.0
        self.assertAlmostEqual(azcb_price(1e-9, 0.0, 1.0), 1e-9 / (2 * gap), delta=1e-18)

    def test_vector_prices(self):
        prices = azcb_price(np.array([1.0, 2.0]), 0.0, np.array([1.0, 0.0]))
        self.assertEqual(prices[1], 1.0)
        self.assertTrue(0.0 < prices[0] < 1.0)

    def test_nonpositive_index_is_rejected(self):
        with self.assertRaises(ValueError):
            azcb_price(0.0, 0.0, 1.0)


class TestHedgeFraction(unittest.TestCase):
    def test_midpoint_value(self):
        self.assertAlmostEqual(hedge_fraction(0.5), math.log(2.0), places=15)

    def test_outside_the_unit_interval_is_rejected(self):
        for bad in (0.0, 1.0, -0.1, 1.5, float("nan")):
            with self.assertRaises(HedgeDomainError):
                hedge_fraction(bad)
        self.assertTrue(issubclass(HedgeDomainError, ValueError))
        self.assertTrue(issubclass(HedgeDomainError, NumericalError))

    def test_fraction_at_price_is_the_price_elasticity(self):
        S = np.linspace(0.1, 5.0, 20)
        gaps = np.linspace(0.2, 5.0, 20)
        worst = 0.0
        for s in S:
            for gap in gaps:
                tau_bar = math.log1p(gap)
                h = 1e-5 * s
                slope = (azcb_price(s + h, 0.0, tau_bar) - azcb_price(s - h, 0.0, tau_bar)) / (2 * h)
                price = azcb_price(s, 0.0, tau_bar)
                worst = max(worst, abs(slope * s / price - hedge_fraction(price)))
        self.assertLess(worst, 1e-6)


class TestContracts(unittest.TestCase):
    def setUp(self):
        self.dates = pd.bdate_range("2020-01-01", periods=10)
        self.line = flat_trend(self.dates, 1.0, fit_end=3)

    def test_locate_snaps_forward_to_the_next_observation(self):
        # 2020-01-04 is a Saturday
        self.assertEqual(self.dates[locate(self.dates, "2020-01-04")], pd.Timestamp("2020-01-06"))
        self.assertEqual(locate(self.dates, 4), 4)
        with self.assertRaises(ConfigError):
            locate(self.dates, "2021-01-01")

    def test_initiation_inside_the_fit_window_is_rejected(self):
        with self.assertRaises(ConfigError):
            AZCBContract(2, 8, self.line, 1.0)

    def test_maturity_must_follow_initiation(self):
        with self.assertRaises(ConfigError):
            make_contract(self.dates, 5, 5, self.line)

    def test_tau_bar_is_taken_from_the_trendline(self):
        line = TrendLine(0.5, 2.0, 1.0, (0, 3), self.dates[0])
        contract = make_contract(self.dates, 3, 9, line)
        expected = 0.5 + 2.0 * (self.dates[9] - self.dates[0]).days / 365.25
        self.assertAlmostEqual(contract.tau_bar_T, expected, places=14)


class TestHedgeKernel(unittest.TestCase):
    def test_self_financing_on_simulated_paths(self):
        paths = simulate_paths(SimConfig(s0=1.0, tau0=0.2, slope=0.1, horizon=2.0, step=1 / 52, n_paths=100, seed=5))
        n = len(paths)
        last = len(paths.times) - 1
        batch = hedge_contracts(
            paths.S, paths.tau, np.zeros(n, dtype=int), np.full(n, last), np.full(n, paths.tau[-1]), record=True
        )
        Z, pi = batch.trace["portfolio"], batch.trace["fraction"]
        rebuilt = Z[:-1] * (1.0 + pi[:-1] * (paths.S[1:] / paths.S[:-1] - 1.0))
        self.assertLess(np.max(np.abs(rebuilt - Z[1:])), 1e-14)
        np.testing.assert_array_equal(Z[0], batch.p_start)

    def test_single_step_hand_computation(self):
        S = np.array([1.0, 1.3])
        tau = np.array([0.0, 0.4])
        batch = hedge_contracts(S, tau, [0], [1], [0.4])

        p0 = azcb_price(1.0, 0.0, 0.4)
        z1 = p0 * (1.0 + hedge_fraction(p0) * 0.3)
        self.assertEqual(batch.payoff[0], 1.0)
        self.assertAlmostEqual(batch.z_final[0], z1, places=15)
        self.assertAlmostEqual(batch.max_abs_error[0], abs(1.0 - z1), places=15)

    def test_portfolio_at_par_is_frozen_for_good(self):
        S = np.array([1.0, 100.0, 0.5, 3.0])
        tau = np.zeros(4)
        batch = hedge_contracts(S, tau, [0], [3], [math.log(2.0)], record=True)

        Z, pi = batch.trace["portfolio"][:, 0], batch.trace["fraction"][:, 0]
        self.assertGreaterEqual(Z[1], 1.0)
        np.testing.assert_array_equal(pi[1:], 0.0)
        self.assertEqual(Z[1], Z[2])
        self.assertEqual(Z[2], Z[3])

    def test_contracts_are_independent_of_their_batch(self):
        S = zigzag_series().values
        tau = activity_time(zigzag_series(), -3.0).tau
        starts, maturities, bars = [2, 5, 2], [30, 40, 12], [-1.0, -0.5, -2.0]
        together = hedge_contracts(S, tau, starts, maturities, bars)
        for k in range(3):
            alone = hedge_contracts(S, tau, [starts[k]], [maturities[k]], [bars[k]])
            self.assertAlmostEqual(alone.z_final[0], together.z_final[k], places=14)
            self.assertAlmostEqual(alone.max_abs_error[0], together.max_abs_error[k], places=14)

    def test_invalid_positions_are_rejected(self):
        with self.assertRaises(ConfigError):
            hedge_contracts(np.ones(5), np.zeros(5), [3], [2], [1.0])
        with self.assertRaises(ConfigError):
            hedge_contracts(np.ones(5), np.zeros(5), [0], [5], [1.0])
        with self.assertRaises(ConfigError):
            hedge_contracts(np.ones(5), np.zeros(5), [0, 1], [4], [1.0])

    def test_costs_that_exhaust_wealth_are_a_numerical_error(self):
        with self.assertRaises(NumericalError):
            hedge_contracts(np.array([1.0, 1.1, 1.2]), np.zeros(3), [0], [2], [2.0], costs=CostModel(proportional_rate=5.0))


class TestRunHedge(unittest.TestCase):
    def setUp(self):
        self.S = zigzag_series()
        self.tau = activity_time(self.S, -3.0)
        self.line = TrendLine(0.0, 0.1, 1.0, (0, 5), self.S.dates[0])
        self.contract = make_contract(self.S.dates, 5, 40, self.line)

    def test_constant_index_has_no_error_and_no_flvr(self):
        dates = pd.bdate_range("2020-01-01", periods=9)
        S = ObservationSeries(dates=dates, values=np.full(9, 2.0), role=SeriesRole.DISCOUNTED)
        tau = activity_time(S, 0.0)
        contract = make_contract(dates, 2, 8, flat_trend(dates, 1.0))

        ledger = run_hedge(contract, S, tau)

        np.testing.assert_array_equal(ledger.error, 0.0)
        np.testing.assert_array_equal(ledger.flvr, 0.0)

    def test_ledger_layout_and_summary(self):
        ledger = run_hedge(self.contract, self.S, self.tau)
        frame = ledger.to_frame()

        self.assertEqual(list(frame.columns), ["date", "S", "tau", "P", "Z", "pi", "C", "V", "cost"])
        self.assertEqual(len(frame), 36)
        self.assertEqual(ledger.error[0], 0.0)
        self.assertEqual(ledger.flvr[0], 0.0)
        self.assertEqual(frame["pi"].iloc[-1], 0.0)

        v, worst = flvr_outcome(ledger)
        summary = ledger.summary()
        self.assertEqual(summary["flvr_maturity"], v)
        self.assertEqual(summary["max_abs_error"], worst)
        self.assertAlmostEqual(summary["risk_neutral_saving"], 1.0 - ledger.p_start)
        self.assertEqual(summary["total_cost"], 0.0)

    def test_costs_reduce_the_flvr(self):
        free = run_hedge(self.contract, self.S, self.tau)
        costly = run_hedge(self.contract, self.S, self.tau, costs=CostModel.from_bp(50))

        self.assertLess(costly.flvr[-1], free.flvr[-1])
        self.assertGreater(costly.summary()["total_cost"], 0.0)
        # The initial purchase is charged at initiation
        self.assertAlmostEqual(costly.cost_paid[0], 0.005 * costly.fraction[0] * costly.price[0], places=15)

    def test_price_fraction_source_starts_from_the_same_fraction(self):
        by_portfolio = run_hedge(self.contract, self.S, self.tau)
        by_price = run_hedge(self.contract, self.S, self.tau, fraction_source=FractionSource.PRICE)
        self.assertEqual(by_portfolio.fraction[0], by_price.fraction[0])
        np.testing.assert_allclose(by_price.fraction[:-1], hedge_fraction(by_price.price[:-1]), rtol=1e-14)

    def test_grids_must_match(self):
        other = activity_time(ObservationSeries(self.S.dates[:-1], self.S.values[:-1], SeriesRole.DISCOUNTED), -3.0)
        with self.assertRaises(ConfigError):
            run_hedge(self.contract, self.S, other)


if __name__ == "__main__":
    unittest.main()
