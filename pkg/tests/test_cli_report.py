#!/usr/bin/env python
'''
tests/test_cli_report.py

This file contains unit tests for configuration parsing, the output files
and the subcommands of cli_report.py.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''

import filecmp
import json
import os
import shutil
import unittest
from collections import OrderedDict

from excess_risk_lab.cli_report import CONFIG_FILE, COVERAGE_FILE, MANIFEST_FILE, RATE_FILE, RATIO_FILE, \
    SUMMARY_FILE, SUMMARY_HEADER, THREADS_ENV, TRIALS_FILE, ConfigParseError, emit_outputs, format_number, \
    parse_cells, parse_config, parse_pieces, read_trials, resolve_threads, run_cli
from excess_risk_lab.experiment import ExperimentResult, RegimeError, summarize
from excess_risk_lab.problem_model import ConfigurationError
from excess_risk_lab.risk_metrics import RiskRecord

CSV_FILES = [TRIALS_FILE, SUMMARY_FILE, RATIO_FILE, COVERAGE_FILE, RATE_FILE, CONFIG_FILE]


class ParseConfigTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(self):
        self.inputs = os.path.dirname(__file__) + '/collateral/test_inputs/'

    def test_minimal(self):
        config = parse_config(self.inputs + 'minimal.ini')
        self.assertEqual(config.grid, [(1000, 8)])
        self.assertEqual(config.degree, 0)
        self.assertEqual(config.trials, 20)
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.problem.sigma_min, 1.0)
        self.assertEqual(config.degeneracy_threshold, 0.9)

    def test_seed_override(self):
        self.assertEqual(parse_config(self.inputs + 'minimal.ini', seed=99).seed, 99)

    def test_full_problem(self):
        config = parse_config(self.inputs + 'small_grid.ini')
        self.assertEqual(config.degree, 1)
        self.assertEqual(config.grid, [(200, 4), (400, 4), (800, 8), (1600, 8)])
        self.assertEqual(config.problem.noise_shape, 'uniform')
        self.assertTrue(config.problem.claim_h2)
        self.assertEqual(config.claims, ['H1', 'H2', 'H2bis', 'H3', 'H4'])
        self.assertAlmostEqual(config.problem.design_density.mass(0.0, 0.5), 0.75)

    def test_regime_violation(self):
        with self.assertRaises(RegimeError) as context:
            parse_config(self.inputs + 'regime_violation.ini')
        self.assertIn('A_- (ln n)^2', str(context.exception))

    def test_vanishing_density(self):
        with self.assertRaises(ConfigurationError) as context:
            parse_config(self.inputs + 'density_zero.ini')
        self.assertIn('c_min', str(context.exception))

    def test_bad_field(self):
        with self.assertRaises(ConfigParseError) as context:
            parse_config(self.inputs + 'bad_field.ini')
        self.assertEqual(context.exception.section, 'experiment')
        self.assertEqual(context.exception.field, 'trials')
        self.assertEqual(context.exception.line, 9)

    def test_missing_file(self):
        with self.assertRaises(ConfigParseError):
            parse_config(self.inputs + 'no_such_config.ini')

    def test_value_grammar(self):
        self.assertEqual(parse_cells('100:4, 200:8,'), [(100, 4), (200, 8)])
        self.assertEqual(parse_pieces('0 1; 2, 3 4'), [[0.0, 1.0], [2.0, 3.0, 4.0]])
        with self.assertRaises(ValueError):
            parse_cells('100-4')

    def test_threads(self):
        saved = os.environ.pop(THREADS_ENV, None)
        try:
            self.assertEqual(resolve_threads(None), 1)
            os.environ[THREADS_ENV] = '3'
            self.assertEqual(resolve_threads(None), 3)
            self.assertEqual(resolve_threads(2), 2)
            self.assertGreaterEqual(resolve_threads(0), 1)
        finally:
            os.environ.pop(THREADS_ENV, None)
            if saved is not None:
                os.environ[THREADS_ENV] = saved


class OutputsTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(self):
        self.collateral = os.path.dirname(__file__) + '/collateral/'
        self.inputs = self.collateral + 'test_inputs/'
        self.output_dir = self.collateral + 'test_outputs/'

    def tearDown(self):
        if os.path.exists(self.output_dir):
            shutil.rmtree(self.output_dir)

    def read_lines(self, name, subdir=''):
        with open(os.path.join(self.output_dir, subdir, name), encoding='utf-8') as f:
            return f.read().split('\n')

    def test_empty_result(self):
        config = parse_config(self.inputs + 'minimal.ini')
        manifest = emit_outputs(ExperimentResult(config, [], OrderedDict(), {}), self.output_dir)
        self.assertEqual(self.read_lines(TRIALS_FILE),
                         ['n,D,r,trial,true_excess,empirical_excess,ratio,sup_dist,chi,degenerate', ''])
        self.assertEqual(self.read_lines(SUMMARY_FILE), [','.join(SUMMARY_HEADER), ''])
        for path in manifest.files.values():
            self.assertTrue(os.path.isfile(path))

    def test_one_trial(self):
        config = parse_config(self.inputs + 'minimal.ini')
        record = RiskRecord(n=1000, D=8, r=0, trial=0, true_excess=0.1, empirical_excess=1.0 / 3.0, bias=0.0,
                            sup_dist=0.25, chi=0.5, degenerate=False, cond_estimate=0.2)
        emit_outputs(summarize(config, [record]), self.output_dir)
        lines = self.read_lines(TRIALS_FILE)
        self.assertEqual(len(lines), 3)
        self.assertEqual(lines[1], '1000,8,0,0,0.10000000000000001,0.33333333333333331,0.30000000000000004,'
                                   '0.25,0.5,0')
        back = read_trials(os.path.join(self.output_dir, TRIALS_FILE))[0]
        self.assertEqual(back.empirical_excess, 1.0 / 3.0)
        self.assertEqual(back.true_excess, 0.1)
        self.assertFalse(back.degenerate)

    def test_degenerate_only_cell(self):
        config = parse_config(self.inputs + 'minimal.ini')
        records = [RiskRecord(n=1000, D=8, r=0, trial=t, true_excess=0.1, empirical_excess=0.1, bias=0.0,
                              sup_dist=0.25, chi=0.5, degenerate=True, cond_estimate=1.0) for t in range(20)]
        emit_outputs(summarize(config, records), self.output_dir)
        row = dict(zip(SUMMARY_HEADER, self.read_lines(SUMMARY_FILE)[1].split(',')))
        self.assertEqual(row['degenerate'], '20')
        self.assertEqual(row['non_degenerate'], '0')
        self.assertEqual(row['coverage_true_0.5'], 'nan')
        self.assertEqual(row['coverage_emp_0.1'], 'nan')

    def test_format_number(self):
        self.assertEqual(format_number(0.1), '0.10000000000000001')
        self.assertEqual(format_number(float('nan')), 'nan')
        self.assertEqual(format_number(True), '1')
        self.assertEqual(float(format_number(2.0 / 3.0)), 2.0 / 3.0)


class RunCliTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(self):
        self.collateral = os.path.dirname(__file__) + '/collateral/'
        self.inputs = self.collateral + 'test_inputs/'
        self.output_dir = self.collateral + 'test_outputs/'

    def tearDown(self):
        if os.path.exists(self.output_dir):
            shutil.rmtree(self.output_dir)

    def test_check(self):
        self.assertEqual(run_cli(['check', '-q', '--config', self.inputs + 'minimal.ini']), 0)
        self.assertEqual(run_cli(['check', '-q', '--config', self.inputs + 'regime_violation.ini']), 1)
        self.assertEqual(run_cli(['check', '-q', '--config', self.inputs + 'density_zero.ini']), 1)
        self.assertEqual(run_cli(['check', '-q', '--config', self.inputs + 'bad_field.ini']), 1)

    def test_run_is_reproducible(self):
        first = self.output_dir + 'first'
        second = self.output_dir + 'second'
        config = self.inputs + 'small_grid.ini'
        self.assertEqual(run_cli(['run', '-q', '--config', config, '--out', first]), 0)
        self.assertEqual(run_cli(['run', '-q', '--config', config, '--out', second, '--threads', '2']), 0)
        for name in CSV_FILES:
            self.assertTrue(filecmp.cmp(os.path.join(first, name), os.path.join(second, name), shallow=False), name)
        with open(os.path.join(first, MANIFEST_FILE), encoding='utf-8') as f:
            manifest = json.load(f)
        self.assertEqual(manifest['seed'], 11)
        self.assertEqual(sorted(manifest['files']), sorted(CSV_FILES))

    def test_seed_changes_output(self):
        config = self.inputs + 'minimal.ini'
        self.assertEqual(run_cli(['run', '-q', '--config', config, '--out', self.output_dir + 'a']), 0)
        self.assertEqual(run_cli(['run', '-q', '--config', config, '--out', self.output_dir + 'b', '--seed', '8']), 0)
        self.assertFalse(filecmp.cmp(self.output_dir + 'a/' + TRIALS_FILE, self.output_dir + 'b/' + TRIALS_FILE,
                                     shallow=False))
        self.assertEqual(parse_config(self.output_dir + 'b/' + CONFIG_FILE).seed, 8)

    def test_report_round_trip(self):
        run_dir = self.output_dir + 'run'
        self.assertEqual(run_cli(['run', '-q', '--config', self.inputs + 'small_grid.ini', '--out', run_dir]), 0)
        saved = self.output_dir + 'saved'
        os.makedirs(saved)
        for name in (SUMMARY_FILE, RATIO_FILE, COVERAGE_FILE, RATE_FILE):
            shutil.copy(os.path.join(run_dir, name), saved)
            os.remove(os.path.join(run_dir, name))
        self.assertEqual(run_cli(['report', '-q', '--out', run_dir]), 0)
        for name in (SUMMARY_FILE, RATIO_FILE, COVERAGE_FILE, RATE_FILE):
            self.assertTrue(filecmp.cmp(os.path.join(saved, name), os.path.join(run_dir, name), shallow=False), name)

    def test_insufficient_data(self):
        config = self.inputs + 'minimal.ini'
        self.assertEqual(run_cli(['run', '-q', '--config', config, '--out', self.output_dir + 'x']), 0)
        with open(self.output_dir + 'x/' + CONFIG_FILE, encoding='utf-8') as f:
            text = f.read()
        strict = self.output_dir + 'strict.ini'
        with open(strict, 'w', encoding='utf-8') as f:
            f.write(text.replace('min_trials = 5', 'min_trials = 500'))
        self.assertEqual(run_cli(['report', '-q', '--out', self.output_dir + 'x', '--config', strict]), 2)

    def test_report_grid_mismatch(self):
        run_dir = self.output_dir + 'grid'
        self.assertEqual(run_cli(['run', '-q', '--config', self.inputs + 'minimal.ini', '--out', run_dir]), 0)
        with self.assertRaises(ConfigParseError) as context:
            read_trials(os.path.join(run_dir, TRIALS_FILE), grid=[(1000, 16)])
        self.assertEqual(context.exception.field, 'cells')
        self.assertEqual(context.exception.line, 2)
        with self.assertRaises(ConfigParseError):
            read_trials(os.path.join(run_dir, TRIALS_FILE), degree=1)
        with open(os.path.join(run_dir, CONFIG_FILE), encoding='utf-8') as f:
            text = f.read()
        self.assertIn('cells = 1000:8', text)
        other = self.output_dir + 'other_grid.ini'
        with open(other, 'w', encoding='utf-8') as f:
            f.write(text.replace('cells = 1000:8', 'cells = 1000:16'))
        self.assertEqual(run_cli(['report', '-q', '--out', run_dir, '--config', other]), 1)

    def test_failed_claim(self):
        self.assertEqual(run_cli(['run', '-q', '--config', self.inputs + 'failed_claim.ini',
                                  '--out', self.output_dir + 'claim']), 1)


if __name__ == '__main__':
    unittest.main()
