import math
import unittest

import numpy as np
import pandas as pd
from scipy import stats

from activity_time import activity_time, first_half_window, fit_trendline
from azcb import CostModel, FractionSource, run_hedge
from panel import (
    InitiationWindow,
    PanelResult,
    TermRange,
    build_panel,
    cost_sensitivity,
    histogram_frame,
    mean_and_std,
    month_start_positions,
    run_panel,
    student_t_cdf,
    student_t_quantile,
    t_test,
    t_test_from_stats,
)
from tests.fixtures import business_dates, random_walk_series
from utils.errors import ConfigError, DataError, NumericalError


def toy_result(flvr, errors=None):
    n = len(flvr)
    dates = pd.bdate_range("2010-01-01", periods=n)
    return PanelResult(
        start_dates=dates,
        maturity_dates=dates + pd.Timedelta(days=400),
        term_months=np.full(n, 13),
        p_start=np.full(n, 0.5),
        flvr=np.asarray(flvr, dtype=float),
        max_abs_error=np.asarray(errors if errors is not None else np.full(n, 1e-4), dtype=float),
        total_cost=np.zeros(n),
    )


class TestAggregates(unittest.TestCase):
    def test_mean_and_sample_std(self):
        self.assertEqual(mean_and_std([1.0, 2.0, 3.0]), (2.0, 1.0))
        self.assertEqual(mean_and_std([4.0]), (4.0, None))
        with self.assertRaises(DataError):
            mean_and_std([])

    def test_two_contract_panel_by_hand(self):
        result = toy_result([0.1, 0.3], errors=[2e-4, 4e-4])

        self.assertEqual(result.n, 2)
        self.assertAlmostEqual(result.m_v, 0.2, places=15)
        self.assertAlmostEqual(result.s_v, math.sqrt(0.02), places=15)
        self.assertEqual(result.error_max, 4e-4)
        self.assertAlmostEqual(result.error_std, math.sqrt(2e-8), places=15)
        self.assertEqual(result.positive_fraction, 1.0)
        self.assertEqual(result.min_flvr, 0.1)

    def test_aggregates_do_not_depend_on_contract_order(self):
        rng = np.random.default_rng(1)
        flvr = rng.normal(0.17, 0.11, 500)
        errors = rng.uniform(0, 1e-3, 500)
        order = rng.permutation(500)

        first, shuffled = toy_result(flvr, errors), toy_result(flvr[order], errors[order])

        self.assertEqual(first.m_v, shuffled.m_v)
        self.assertEqual(first.s_v, shuffled.s_v)
        self.assertEqual(first.error_std, shuffled.error_std)
        np.testing.assert_array_equal(first.flvr_histogram.counts, shuffled.flvr_histogram.counts)

    def test_single_contract_flags_the_undefined_std(self):
        with self.assertLogs(level="WARNING"):
            result = toy_result([0.2])
        self.assertIsNone(result.s_v)
        with self.assertRaises(DataError):
            t_test(result)

    def test_histogram_table(self):
        result = toy_result(np.linspace(-0.1, 0.5, 101))
        frame = histogram_frame(result.flvr_histogram)
        self.assertEqual(list(frame.columns), ["bin_left", "bin_right", "count"])
        self.assertEqual(len(frame), 50)
        self.assertEqual(frame["count"].sum(), 101)


class TestStudentT(unittest.TestCase):
    def test_cdf_reference_values(self):
        self.assertEqual(student_t_cdf(0.0, 7), 0.5)
        self.assertAlmostEqual(student_t_cdf(1.0, 1), 0.75, places=14)
        self.assertAlmostEqual(student_t_cdf(-1.0, 1), 0.25, places=14)

    def test_quantile_inverts_the_cdf(self):
        for df in (1, 2, 5, 30, 1000, 8474):
            for p in (1e-6, 0.01, 0.1, 0.3, 0.7, 0.9, 0.99, 1 - 1e-6):
                with self.subTest(df=df, p=p):
                    self.assertLessEqual(abs(student_t_cdf(student_t_quantile(p, df), df) - p), 1e-9)

    def test_quantile_reference_values(self):
        self.assertEqual(student_t_quantile(0.5, 12), 0.0)
        self.assertAlmostEqual(student_t_quantile(0.75, 1), 1.0, delta=1e-9)
        self.assertAlmostEqual(student_t_quantile(1 - 1e-6, 8474), 4.757, delta=0.01)
        self.assertAlmostEqual(student_t_quantile(0.05, 9), -student_t_quantile(0.95, 9), places=12)

    def test_large_df_approaches_the_normal(self):
        self.assertAlmostEqual(student_t_quantile(0.975, 1e5), stats.norm.ppf(0.975), delta=1e-4)
        for df in (1e4, 5e4, 1e6):
            for p in np.linspace(0.9, 0.9999, 12):
                with self.subTest(df=df, p=p):
                    self.assertAlmostEqual(student_t_quantile(p, df), stats.norm.ppf(p), delta=5e-4)

    def test_invalid_arguments(self):
        for p in (0.0, 1.0, -0.2):
            with self.assertRaises(ConfigError):
                student_t_quantile(p, 5)
        with self.assertRaises(ConfigError):
            student_t_quantile(0.9, 0.5)


class TestTTest(unittest.TestCase):
    def test_reported_statistics_reject_with_the_published_threshold(self):
        report = t_test_from_stats(0.1680, 0.1135, 8475, 1e-6)

        self.assertAlmostEqual(report.threshold, 0.0059, delta=0.0005)
        self.assertTrue(report.reject)
        self.assertTrue(report.reject_by_threshold)
        self.assertEqual(report.df, 8474)
        self.assertAlmostEqual(report.statistic, 0.1680 / (0.1135 / math.sqrt(8475)), places=10)

    def test_boundary_is_inclusive_in_both_forms(self):
        critical = student_t_quantile(0.95, 9)
        report = t_test_from_stats(critical / math.sqrt(10), 1.0, 10, 0.05)
        self.assertTrue(report.reject)
        self.assertTrue(report.reject_by_threshold)

    def test_forms_agree_below_the_boundary(self):
        for m_v in (-0.1, 0.0, 0.01, 0.05, 0.2):
            report = t_test_from_stats(m_v, 0.11, 50, 0.01)
            self.assertEqual(report.reject, report.reject_by_threshold)

    def test_forms_agree_on_random_samples(self):
        rng = np.random.default_rng(13)
        for trial in range(200):
            n = int(rng.integers(2, 500))
            sample = rng.normal(rng.uniform(-0.05, 0.2), rng.uniform(0.01, 0.3), n)
            m_v, s_v = mean_and_std(sample)
            report = t_test_from_stats(m_v, s_v, n, float(10 ** rng.uniform(-6, -1)))
            with self.subTest(trial=trial):
                self.assertEqual(report.reject, report.reject_by_threshold)

    def test_degenerate_inputs(self):
        with self.assertRaises(NumericalError):
            t_test_from_stats(0.1, 0.0, 10, 0.05)
        with self.assertRaises(DataError):
            t_test_from_stats(0.1, 0.1, 1, 0.05)
        with self.assertRaises(ConfigError):
            t_test_from_stats(0.1, 0.1, 10, 1.5)


class TestPanelOnSyntheticData(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.S = random_walk_series(business_dates(3000, "2000-01-03"))
        cls.tau = activity_time(cls.S, -3.0)
        cls.window = first_half_window(len(cls.S))
        cls.line = fit_trendline(cls.tau, cls.window)
        cls.terms = TermRange(min_months=12, max_months=14)
        cls.spec = build_panel(cls.S, cls.line, cls.terms)

    def test_contracts_start_on_month_starts_after_the_fit_window(self):
        dates = self.S.dates
        firsts = set(month_start_positions(dates))
        for contract, months in zip(self.spec.contracts, self.spec.term_months):
            self.assertIn(contract.start_index, firsts)
            self.assertGreaterEqual(contract.start_index, self.window[1])
            target = dates[contract.start_index] + pd.DateOffset(months=int(months))
            self.assertEqual(contract.maturity_index, dates.searchsorted(target))
            self.assertLessEqual(target, dates[-1])
            self.assertIn(months, (12, 13, 14))

    def test_every_fitting_month_start_and_term_is_present(self):
        dates = self.S.dates
        expected = [
            (p, m)
            for p in month_start_positions(dates) if p >= self.window[1]
            for m in (12, 13, 14) if dates[p] + pd.DateOffset(months=m) <= dates[-1]
        ]
        found = [(c.start_index, int(m)) for c, m in zip(self.spec.contracts, self.spec.term_months)]
        self.assertEqual(found, expected)

    def test_initiation_window_and_reference_count(self):
        window = InitiationWindow(start="2008-01-01")
        with self.assertLogs(level="WARNING"):
            spec = build_panel(self.S, self.line, self.terms, window=window, reference_count=1)
        self.assertTrue(all(self.S.dates[c.start_index] >= pd.Timestamp("2008-01-01") for c in spec.contracts))

    def test_terms_longer_than_the_data_give_an_empty_panel(self):
        with self.assertRaises(DataError):
            build_panel(self.S, self.line, TermRange(min_months=500, max_months=501))

    def test_inverted_term_range_is_rejected(self):
        with self.assertRaises(ValueError):
            TermRange(min_months=20, max_months=10)

    def test_panel_matches_single_contract_hedges(self):
        result = run_panel(self.spec, self.S, self.tau)
        self.assertEqual(result.n, len(self.spec))
        for k in (0, len(self.spec) // 2, len(self.spec) - 1):
            ledger = run_hedge(self.spec.contracts[k], self.S, self.tau)
            self.assertAlmostEqual(result.flvr[k], ledger.flvr[-1], places=13)
            self.assertAlmostEqual(result.max_abs_error[k], ledger.max_abs_error, places=13)

    def test_reruns_are_identical_and_chunking_does_not_matter(self):
        first = run_panel(self.spec, self.S, self.tau, chunk_size=16)
        again = run_panel(self.spec, self.S, self.tau, chunk_size=16)
        whole = run_panel(self.spec, self.S, self.tau, chunk_size=100_000)

        np.testing.assert_array_equal(first.flvr, again.flvr)
        self.assertEqual(first.m_v, again.m_v)
        np.testing.assert_allclose(first.flvr, whole.flvr, rtol=0, atol=1e-13)

    def test_table_layout(self):
        frame = run_panel(self.spec, self.S, self.tau).to_frame()
        self.assertEqual(
            list(frame.columns),
            ["contract_id", "start", "maturity", "term_months", "p_start", "V", "max_abs_error", "total_cost"],
        )

    def test_costs_lower_the_mean_flvr(self):
        rows = cost_sensitivity(self.spec, self.S, self.tau, [50.0], alpha=0.01)

        self.assertEqual([r.cost_bp for r in rows], [0.0, 50.0])
        self.assertEqual(rows[0].ratio_to_zero_cost, 1.0)
        self.assertLess(rows[1].m_v, rows[0].m_v)

    def test_zero_cost_row_uses_the_panel_fraction_source(self):
        priced = run_panel(self.spec, self.S, self.tau, fraction_source=FractionSource.PRICE)
        default = run_panel(self.spec, self.S, self.tau)
        rows = cost_sensitivity(self.spec, self.S, self.tau, [25.0], alpha=0.01, fraction_source=FractionSource.PRICE)

        self.assertEqual(rows[0].cost_bp, 0.0)
        self.assertEqual(rows[0].m_v, priced.m_v)
        self.assertNotEqual(priced.m_v, default.m_v)

    def test_costed_panel_reports_costs(self):
        costed = build_panel(self.S, self.line, self.terms, costs=CostModel.from_bp(25))
        result = run_panel(costed, self.S, self.tau)
        self.assertTrue(np.all(result.total_cost >= 0.0))


if __name__ == "__main__":
    unittest.main()
