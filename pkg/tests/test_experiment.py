#!/usr/bin/env python
'''
tests/test_experiment.py

This file contains unit tests for the Monte-Carlo engine and the bound
checks of experiment.py. The bound checks are exercised on constructed
records; the engine on small seeded runs.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''

import io
import unittest
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
from numpy.testing import assert_allclose

from excess_risk_lab.assumptions import AssumptionError
from excess_risk_lab.experiment import DegenerateRegressionError, ExperimentConfig, InsufficientDataError, \
    RegimeError, brute_force_empirical_excess, check_first_order, check_small_models, check_sup_norm_rate, \
    coverage, degeneracy_sensitivity, dimension_bounds, iqr_gap_standard_error, run_experiment, summarize, \
    trial_seed
from excess_risk_lab.partition_basis import Partition
from excess_risk_lab.problem_model import ConfigurationError, DesignDensity, PiecewisePolynomial, \
    RegressionProblem, make_noise_level
from excess_risk_lab.risk_metrics import RiskRecord


def unit_problem(sigma=1.0, target=0.0):
    return RegressionProblem(PiecewisePolynomial.constant(target), make_noise_level('constant', [sigma]),
                             DesignDensity.from_family('uniform'), bound_A=1.0)


def make_record(n, D, trial, true_excess=0.01, empirical_excess=0.01, sup_dist=0.1, chi=0.1,
                degenerate=False, cond_estimate=0.1):
    return RiskRecord(n=n, D=D, r=0, trial=trial, true_excess=true_excess, empirical_excess=empirical_excess,
                      bias=0.0, sup_dist=sup_dist, chi=chi, degenerate=degenerate, cond_estimate=cond_estimate)


class ConfigTestCase(unittest.TestCase):
    def test_trial_seed(self):
        self.assertEqual(trial_seed(1, 100, 8, 3), trial_seed(1, 100, 8, 3))
        seeds = set(trial_seed(1, 100, 8, t) for t in range(100))
        self.assertEqual(len(seeds), 100)
        self.assertNotEqual(trial_seed(1, 100, 8, 0), trial_seed(2, 100, 8, 0))
        self.assertNotEqual(trial_seed(1, 100, 8, 0), trial_seed(1, 100, 16, 0))
        self.assertLess(trial_seed(5, 1, 1, 1), 2 ** 64)

    def test_dimension_bounds(self):
        low, high = dimension_bounds(1000, 'mid', 0.1, 1.0)
        self.assertAlmostEqual(low, 0.1 * np.log(1000) ** 2)
        self.assertAlmostEqual(high, 1000 / np.log(1000) ** 2)
        self.assertEqual(dimension_bounds(1000, 'none', 0.1, 1.0), (1.0, np.inf))
        self.assertEqual(dimension_bounds(1000, 'small', 0.1, 1.0)[0], 1.0)
        self.assertEqual(dimension_bounds(1, 'mid', 0.1, 1.0), (0.0, np.inf))

    def test_regime_violation(self):
        with self.assertRaises(RegimeError) as context:
            ExperimentConfig(unit_problem(), grid=[(1000, 8), (1000, 1000)], regime='mid')
        self.assertIn('n=1000, D=1000', str(context.exception))
        self.assertNotIn('D=8)', str(context.exception))
        ExperimentConfig(unit_problem(), grid=[(1000, 1000)], regime='none')

    def test_invalid_grid(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(unit_problem(), degree=1, grid=[(1000, 9)], regime='none')
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(unit_problem(), grid=[(1000, 8), (1000, 8)], regime='none')
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(unit_problem(), grid=[], regime='none')
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(unit_problem(), grid=[(100, 4)], regime='none', breakpoints=[0.0, 0.5, 1.0])
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(unit_problem(), grid=[(100, 4)], regime='large')

    def test_partition(self):
        config = ExperimentConfig(unit_problem(), degree=1, grid=[(100, 4)], regime='none')
        self.assertEqual(config.partition_for(4), Partition.equal_width(2))
        config = ExperimentConfig(unit_problem(), degree=1, grid=[(100, 4)], regime='none',
                                  breakpoints=[0.0, 0.3, 1.0])
        self.assertEqual(config.partition_for(4), Partition([0.0, 0.3, 1.0]))


class RunExperimentTestCase(unittest.TestCase):
    def setUp(self):
        self.config = ExperimentConfig(unit_problem(), grid=[(400, 8), (200, 4)], trials=40, seed=3, regime='none',
                                       min_trials=10)

    def test_deterministic(self):
        first = run_experiment(self.config)
        second = run_experiment(self.config, threads=3)
        self.assertEqual(first.records, second.records)
        self.assertEqual(list(first.cells), [(400, 8), (200, 4)])
        for key in first.cells:
            self.assertEqual(first.cells[key].mean_true, second.cells[key].mean_true)

    def test_bookkeeping(self):
        result = run_experiment(self.config)
        self.assertEqual(len(result.records), 80)
        for key, cell in result.cells.items():
            self.assertEqual(cell.non_degenerate + cell.degenerate, 40)
            self.assertEqual([rec.trial for rec in result.records_for(*key, degenerate=True)], list(range(40)))
            values = list(cell.true_quantiles.values())
            self.assertEqual(values, sorted(values))
            self.assertAlmostEqual(cell.K1M_sq, 4.0)
            self.assertAlmostEqual(cell.target, key[1] / float(key[0]))
        for rec in result.records:
            if not rec.degenerate:
                self.assertGreaterEqual(rec.empirical_excess, -1e-15)
                self.assertGreaterEqual(rec.true_excess, 0.0)

    def test_noiseless_in_model(self):
        config = ExperimentConfig(unit_problem(sigma=0.0, target=0.5), grid=[(100, 4)], trials=1, regime='none',
                                  min_trials=1)
        record = run_experiment(config).records[0]
        self.assertFalse(record.degenerate)
        assert_allclose([record.true_excess, record.empirical_excess, record.bias], 0.0, atol=1e-20)

    def test_failed_claim(self):
        problem = RegressionProblem(PiecewisePolynomial.constant(0.0), make_noise_level('polynomial', [0.0, 1.0]),
                                    DesignDensity.from_family('uniform'), bound_A=1.0)
        config = ExperimentConfig(problem, grid=[(100, 4)], trials=1, regime='none', claims=['H2'])
        with self.assertRaises(AssumptionError):
            run_experiment(config)

    def test_moment_identities(self):
        # E[chi^2] = (D / n) K^2 and E[empirical excess | all cells hit] = D sigma^2 / n for regressograms
        config = ExperimentConfig(unit_problem(), grid=[(400, 8)], trials=400, seed=19, regime='none')
        result = run_experiment(config)
        cell = result.cells[(400, 8)]
        self.assertEqual(cell.degenerate, 0)
        self.assertAlmostEqual(cell.chi2_expected, 0.08)
        self.assertLess(abs(cell.chi2_mean - cell.chi2_expected), 4 * cell.chi2_se)
        emp = np.array([rec.empirical_excess for rec in result.records_for(400, 8)])
        self.assertLess(abs(emp.mean() - cell.target), 4 * emp.std(ddof=1) / np.sqrt(len(emp)))

    def test_brute_force_oracle(self):
        problem = RegressionProblem(PiecewisePolynomial([0.0, 0.5, 1.0], [[0.2], [-0.3]]),
                                    make_noise_level('piecewise_constant', [0.5, 0.7], [0.0, 0.5, 1.0]),
                                    DesignDensity.from_family('uniform'), bound_A=1.0)
        exact, hit = brute_force_empirical_excess(problem, Partition.equal_width(2), 4)
        self.assertAlmostEqual(hit, 1.0 - 2 * 0.5 ** 4)
        config = ExperimentConfig(problem, grid=[(4, 2)], trials=4000, seed=5, regime='none')
        result = run_experiment(config)
        emp = np.array([rec.empirical_excess for rec in result.records_for(4, 2)])
        self.assertAlmostEqual(result.cells[(4, 2)].non_degenerate / 4000.0, hit, delta=0.03)
        self.assertLess(abs(emp.mean() - exact), 4 * emp.std(ddof=1) / np.sqrt(len(emp)))

    def test_brute_force_two_points(self):
        exact, hit = brute_force_empirical_excess(unit_problem(), Partition.equal_width(2), 2)
        self.assertAlmostEqual(exact, 1.0)
        self.assertAlmostEqual(hit, 0.5)
        config = ExperimentConfig(unit_problem(), grid=[(2, 2)], trials=200, seed=1, regime='mid', a_plus=1.0)
        emp = [rec.empirical_excess for rec in run_experiment(config).records_for(2, 2)]
        assert_allclose(emp, 1.0)

    def test_brute_force_requirements(self):
        problem = RegressionProblem(PiecewisePolynomial([0.0, 1.0], [[0.0, 0.5]]),
                                    make_noise_level('constant', [0.5]), DesignDensity.from_family('uniform'),
                                    bound_A=1.0)
        with self.assertRaises(ConfigurationError):
            brute_force_empirical_excess(problem, Partition.equal_width(2), 2)
        uniform_noise = RegressionProblem(PiecewisePolynomial.constant(0.0), make_noise_level('constant', [1.0]),
                                          DesignDensity.from_family('uniform'), noise_shape='uniform', bound_A=2.0)
        with self.assertRaises(ConfigurationError):
            brute_force_empirical_excess(uniform_noise, Partition.equal_width(2), 2)

    def test_quiet_run(self):
        config = ExperimentConfig(unit_problem(), grid=[(20, 8)], trials=50, seed=2, regime='none')
        out = io.StringIO()
        err = io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            result = run_experiment(config)
        self.assertGreater(result.cells[(20, 8)].degenerate_fraction, 0.01)
        self.assertEqual(out.getvalue(), '')
        self.assertIn('WARNING: ', err.getvalue())

    def test_degeneracy_sensitivity(self):
        config = ExperimentConfig(unit_problem(), grid=[(20, 8)], trials=50, seed=2, regime='none')
        result = run_experiment(config)
        counts = degeneracy_sensitivity(result, thresholds=(0.3, 0.6, 0.9))[(20, 8)]
        self.assertEqual(list(counts), [0.3, 0.6, 0.9])
        self.assertGreaterEqual(counts[0.3], counts[0.6])
        self.assertGreaterEqual(counts[0.6], counts[0.9])


class FirstOrderCheckTestCase(unittest.TestCase):
    def setUp(self):
        self.config = ExperimentConfig(unit_problem(), grid=[(1000, 8)], trials=100, regime='none')
        self.target = 8 * 4.0 / (4 * 1000)

    def test_exact_target(self):
        records = [make_record(1000, 8, t, self.target, self.target) for t in range(100)]
        report = check_first_order(summarize(self.config, records))
        stats = report.cells[(1000, 8)]
        for e in (0.5, 0.3, 0.2, 0.1):
            self.assertEqual(stats['coverage_true_e{0}'.format(e)], 1.0)
            self.assertEqual(stats['coverage_emp_e{0}'.format(e)], 1.0)
        self.assertEqual(stats['ratio_median'], 1.0)
        self.assertEqual(stats['ratio_mean'], 1.0)
        self.assertIsNone(report.slopes['true_deviation'])
        self.assertEqual(stats['iqr_gap_se'], 0.0)
        self.assertTrue(report.bounded)

    def test_alternating_deviation(self):
        records = [make_record(1000, 8, t, self.target * (1.4 if t % 2 else 0.6), self.target) for t in range(100)]
        result = summarize(self.config, records)
        stats = check_first_order(result).cells[(1000, 8)]
        self.assertEqual(stats['coverage_true_e0.5'], 1.0)
        self.assertEqual(stats['coverage_true_e0.3'], 0.0)
        self.assertEqual(result.cells[(1000, 8)].coverage_true[0.3], 0.0)
        self.assertAlmostEqual(stats['ratio_mean'], 1.0)

    def test_spread_asymmetry(self):
        spread = [self.target * (1.4 if t % 2 else 0.6) for t in range(100)]
        steady = [self.target] * 100
        records = [make_record(1000, 8, t, spread[t], steady[t]) for t in range(100)]
        report = check_first_order(summarize(self.config, records))
        stats = report.cells[(1000, 8)]
        self.assertAlmostEqual(stats['iqr_true'], 0.8)
        self.assertEqual(stats['iqr_emp'], 0.0)
        self.assertTrue(report.bounded)
        records = [make_record(1000, 8, t, steady[t], spread[t]) for t in range(100)]
        self.assertFalse(check_first_order(summarize(self.config, records)).bounded)

    def test_records_outside_grid(self):
        with self.assertRaises(ConfigurationError):
            summarize(self.config, [make_record(1000, 16, 0)])

    def test_iqr_gap_standard_error(self):
        self.assertEqual(iqr_gap_standard_error([1.0] * 10, [2.0] * 10, 1.0), 0.0)
        self.assertTrue(np.isnan(iqr_gap_standard_error([1.0], [1.0], 1.0)))
        rng = np.random.default_rng(3)
        true = rng.exponential(size=400)
        emp = rng.exponential(size=400)
        first = iqr_gap_standard_error(true, emp, 1.0, seed=5)
        self.assertEqual(first, iqr_gap_standard_error(true, emp, 1.0, seed=5))
        # the IQR of 400 Exp(1) draws has sd about 0.087, so the gap of two about 0.12
        self.assertTrue(0.08 < first < 0.25, first)

    def test_custom_target(self):
        records = [make_record(1000, 8, t, 0.5, 0.5) for t in range(100)]
        stats = check_first_order(summarize(self.config, records), target=0.5).cells[(1000, 8)]
        self.assertEqual(stats['coverage_true_e0.1'], 1.0)

    def test_insufficient_data(self):
        records = [make_record(1000, 8, t, degenerate=t >= 50) for t in range(100)]
        with self.assertRaises(InsufficientDataError):
            check_first_order(summarize(self.config, records))
        stats = check_first_order(summarize(self.config, records), min_trials=50).cells[(1000, 8)]
        self.assertAlmostEqual(stats['target'], self.target)

    def test_deviation_slope(self):
        config = ExperimentConfig(unit_problem(), grid=[(1000, 8), (4000, 16), (16000, 32)], trials=100,
                                  regime='none')
        records = list()
        for n, D in config.grid:
            target = D / float(n)
            scale = max((np.log(n) / D) ** 0.25, (D * np.log(n) / n) ** 0.25)
            for t in range(100):
                deviation = scale * (t + 1) / 100.0
                records.append(make_record(n, D, t, target * (1 + deviation), target * (1 - deviation)))
        report = check_first_order(summarize(config, records))
        self.assertAlmostEqual(report.slopes['true_deviation'], 1.0, places=6)
        self.assertAlmostEqual(report.slopes['emp_deviation'], 1.0, places=6)

    def test_coverage_without_values(self):
        self.assertTrue(np.isnan(coverage([], 1.0)[0.5]))


class SupNormRateTestCase(unittest.TestCase):
    def setUp(self):
        self.config = ExperimentConfig(unit_problem(), grid=[(n, 8) for n in (1000, 2000, 4000, 8000)], trials=5,
                                       regime='none')

    def records(self, factor):
        return [make_record(n, D, t, sup_dist=factor * np.sqrt(D * np.log(n) / n))
                for n, D in self.config.grid for t in range(5)]

    def test_exact_rate(self):
        report = check_sup_norm_rate(summarize(self.config, self.records(1.0)))
        self.assertAlmostEqual(report.rho, 1.0, places=10)
        self.assertAlmostEqual(report.kappa, 0.0, places=10)
        self.assertEqual(len(report.points), 4)

    def test_scaled_rate(self):
        report = check_sup_norm_rate(summarize(self.config, self.records(2.0)))
        self.assertAlmostEqual(report.rho, 1.0, places=10)
        self.assertAlmostEqual(report.kappa, np.log(2.0), places=10)

    def test_too_few_abscissae(self):
        config = ExperimentConfig(unit_problem(), grid=[(1000, 8), (2000, 8)], trials=5, regime='none')
        records = [make_record(n, D, t) for n, D in config.grid for t in range(5)]
        with self.assertRaises(DegenerateRegressionError):
            check_sup_norm_rate(summarize(config, records))


class SmallModelsTestCase(unittest.TestCase):
    def setUp(self):
        self.config = ExperimentConfig(unit_problem(), grid=[(n, 4) for n in (1000, 10000, 100000)], trials=5,
                                       regime='none')

    def test_bounded(self):
        records = [make_record(n, D, t, true_excess=max(D, np.log(n)) / n, empirical_excess=max(D, np.log(n)) / n)
                   for n, D in self.config.grid for t in range(5)]
        report = check_small_models(summarize(self.config, records))
        assert_allclose(report.cells[(10000, 4)]['max_true_scaled'], 1.0)
        self.assertAlmostEqual(report.slopes[('true', 4)], 0.0, places=10)
        self.assertTrue(report.bounded)

    def test_growth(self):
        records = [make_record(n, D, t, true_excess=np.log(n) * max(D, np.log(n)) / n,
                               empirical_excess=np.log(n) * max(D, np.log(n)) / n)
                   for n, D in self.config.grid for t in range(5)]
        report = check_small_models(summarize(self.config, records))
        self.assertGreater(report.slopes[('true', 4)], 0.05)
        self.assertGreater(report.slopes[('emp', 4)], 0.05)

    def test_single_regressor(self):
        # D = 1: s_n is the global mean and n * true_excess has mean 1
        config = ExperimentConfig(unit_problem(), grid=[(10000, 1)], trials=300, seed=13, regime='small')
        result = run_experiment(config)
        scaled = np.array([rec.true_excess * 10000 for rec in result.records_for(10000, 1)])
        self.assertLess(abs(scaled.mean() - 1.0), 4 * scaled.std(ddof=1) / np.sqrt(len(scaled)))
        self.assertEqual(len(check_small_models(result).cells), 1)


if __name__ == '__main__':
    unittest.main()
