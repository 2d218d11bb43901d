#!usr/bin/env python
'''
excess_risk_lab/cli_report.py

This file contains the command line entry point: it parses experiment
configuration files, runs experiments, and writes per-trial records,
per-cell summaries and plot-ready data as CSV.

Every number is written with 17 significant digits so that it parses back
to the identical binary value; files are UTF-8 with UNIX newlines.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''
from __future__ import print_function

import configparser
import json
import os
import re
import sys
import time

from excess_risk_lab import __version__
from excess_risk_lab.assumptions import ASSUMPTIONS, AssumptionError
from excess_risk_lab.experiment import COVERAGE_LADDER, DegenerateRegressionError, ExperimentConfig, \
    InsufficientDataError, RegimeError, check_first_order, check_small_models, \
    check_sup_norm_rate, run_experiment, summarize, sup_norm_rate_points
from excess_risk_lab.partition_basis import ConditioningError, DegeneratePartitionError, InvalidPartitionError
from excess_risk_lab.problem_model import ConfigurationError, DesignDensity, PiecewisePolynomial, \
    RegressionProblem, make_noise_level
from excess_risk_lab.risk_metrics import RiskRecord

THREADS_ENV = 'EXCESS_RISK_LAB_THREADS'
TRIALS_FILE = 'trials.csv'
SUMMARY_FILE = 'summary.csv'
RATIO_FILE = 'ratio_vs_n.csv'
COVERAGE_FILE = 'coverage_vs_n.csv'
RATE_FILE = 'sup_norm_rate.csv'
CONFIG_FILE = 'config.ini'
MANIFEST_FILE = 'manifest.json'
TRIAL_HEADER = ['n', 'D', 'r', 'trial', 'true_excess', 'empirical_excess', 'ratio', 'sup_dist', 'chi', 'degenerate']
SUMMARY_HEADER = ['n', 'D', 'r', 'trials', 'non_degenerate', 'degenerate', 'K1M_sq', 'target', 'bias',
                  'mean_true', 'mean_emp', 'ratio_median', 'ratio_mean', 'sup_median', 'sup_q99',
                  'chi2_mean', 'chi2_se', 'chi2_expected', 'iqr_true', 'iqr_emp'] + \
                 ['coverage_true_{0}'.format(e) for e in COVERAGE_LADDER] + \
                 ['coverage_emp_{0}'.format(e) for e in COVERAGE_LADDER]
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INSUFFICIENT = 2

_REQUIRED = object()


def format_number(value):
    '''17 significant digits for floats, plain text for everything else.'''
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, float):
        return '{0:.17g}'.format(value)
    return str(value)


def _csv_line(fields):
    return ','.join(format_number(field) for field in fields) + '\n'


def _locate(path, section, field):
    '''Line number of a field inside a section of a config file, or None.'''
    try:
        with open(path, encoding='utf-8') as f:
            lines = f.readlines()
    except IOError:
        return None
    current = None
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        header = re.match(r'^\[(.+)\]$', stripped)
        if header:
            current = header.group(1).strip()
        elif current == section and re.match(r'^{0}\s*[=:]'.format(re.escape(field)), stripped):
            return number
    return None


class ConfigReader:
    '''Typed access to the fields of a configuration file, raising
    ConfigParseError with the section, field and line of a bad value.

    Attributes:
        path (str): the config file
        parser (configparser.ConfigParser): its parsed content
    '''
    def __init__(self, path):
        self.path = path
        self.parser = configparser.ConfigParser()
        if not os.path.isfile(path):
            raise ConfigParseError('Config file {0} does not exist'.format(path))
        try:
            with open(path, encoding='utf-8') as f:
                self.parser.read_file(f)
        except configparser.Error as err:
            raise ConfigParseError('Could not parse {0}: {1}'.format(path, err),
                                   line=getattr(err, 'lineno', None))

    def error(self, section, field, message):
        line = _locate(self.path, section, field)
        where = '{0}, [{1}] {2}'.format(self.path, section, field)
        if line is not None:
            where += ', line {0}'.format(line)
        return ConfigParseError('{0}: {1}'.format(where, message), section=section, field=field, line=line)

    def get(self, section, field, convert=str, default=_REQUIRED):
        if not self.parser.has_option(section, field):
            if default is _REQUIRED:
                raise self.error(section, field, 'missing required field')
            return default
        raw = self.parser.get(section, field).strip()
        try:
            return convert(raw)
        except (ValueError, TypeError) as err:
            raise self.error(section, field, 'invalid value "{0}" ({1})'.format(raw, err))

    def get_bool(self, section, field, default=False):
        if not self.parser.has_option(section, field):
            return default
        try:
            return self.parser.getboolean(section, field)
        except ValueError as err:
            raise self.error(section, field, str(err))


def parse_floats(text):
    '''Numbers separated by whitespace and / or commas.'''
    values = [float(token) for token in text.replace(',', ' ').split()]
    if len(values) == 0:
        raise ValueError('expected at least one number')
    return values


def parse_pieces(text):
    '''Coefficient lists of the pieces, separated by ';'.'''
    return [parse_floats(piece) for piece in text.split(';')]


def parse_cells(text):
    '''(n, D) pairs written as n:D and separated by commas.'''
    cells = list()
    for token in text.split(','):
        token = token.strip()
        if not token:
            continue
        n, sep, D = token.partition(':')
        if not sep:
            raise ValueError('cell "{0}" is not of the form n:D'.format(token))
        cells.append((int(n), int(D)))
    if len(cells) == 0:
        raise ValueError('expected at least one n:D cell')
    return cells


def parse_names(text):
    names = [name.strip() for name in text.split(',') if name.strip()]
    unknown = [name for name in names if name not in ASSUMPTIONS]
    if unknown:
        raise ValueError('unknown assumptions {0}, expected some of {1}'.format(unknown, ', '.join(ASSUMPTIONS)))
    return names


def build_problem(reader):
    '''Build the RegressionProblem of the [problem] section.'''
    section = 'problem'
    target = PiecewisePolynomial(reader.get(section, 'target_breakpoints', parse_floats, [0.0, 1.0]),
                                 reader.get(section, 'target_coefficients', parse_pieces, [[0.0]]))
    noise_family = reader.get(section, 'noise_level', default='constant')
    noise_level = make_noise_level(noise_family,
                                   reader.get(section, 'noise_values', parse_floats, [1.0]),
                                   reader.get(section, 'noise_breakpoints', parse_floats, None))
    density = DesignDensity.from_family(reader.get(section, 'design_density', default='uniform'),
                                        reader.get(section, 'density_values', parse_floats, None),
                                        reader.get(section, 'density_breakpoints', parse_floats, None))
    return RegressionProblem(target, noise_level, density,
                             noise_shape=reader.get(section, 'noise_shape', default='rademacher'),
                             bound_A=reader.get(section, 'bound_A', float, 1.0),
                             claim_h2=reader.get_bool(section, 'claim_h2'))


def parse_config(path, seed=None):
    '''Read and validate an experiment configuration file.

    Regime guards, density bounds and the problem's envelope are all
    checked here, before any trial is run.

    Args:
        path (str): the INI file
        seed (int) [optional]: overrides [experiment] seed

    Returns:
        ExperimentConfig: the validated configuration
    '''
    reader = ConfigReader(path)
    problem = build_problem(reader)
    partition = reader.get('model', 'partition', default='equal_width')
    if partition not in ('equal_width', 'breakpoints'):
        raise reader.error('model', 'partition', 'expected equal_width or breakpoints, got {0}'.format(partition))
    breakpoints = None
    if partition == 'breakpoints':
        breakpoints = reader.get('model', 'breakpoints', parse_floats)
    section = 'experiment'
    if seed is None:
        seed = reader.get(section, 'seed', int, 0)
    return ExperimentConfig(
        problem,
        degree=reader.get('model', 'degree', int, 0),
        grid=reader.get(section, 'cells', parse_cells),
        trials=reader.get(section, 'trials', int, 100),
        alpha=reader.get(section, 'alpha', float, 2.0),
        seed=seed,
        breakpoints=breakpoints,
        regime=reader.get(section, 'regime', default='mid'),
        a_minus=reader.get(section, 'a_minus', float, 0.1),
        a_plus=reader.get(section, 'a_plus', float, 1.0),
        degeneracy_threshold=reader.get(section, 'degeneracy_threshold', float, 0.9),
        min_trials=reader.get(section, 'min_trials', int, 100),
        claims=reader.get(section, 'claims', parse_names, []),
    )


class RunManifest:
    '''What a run wrote, and how.

    Attributes:
        config (str): the effective configuration text
        version (str): the package version
        wall_clock (float): seconds the run took
        seed (int): the global seed
        files (dict[str:str]): output name to path
    '''
    def __init__(self, config, version, wall_clock, seed, files):
        self.config = config
        self.version = version
        self.wall_clock = wall_clock
        self.seed = seed
        self.files = files

    def to_dict(self):
        return {
            'config': self.config,
            'version': self.version,
            'wall_clock': self.wall_clock,
            'seed': self.seed,
            'files': self.files,
        }


def _write_file(outfile, contents, verbose=False):
    '''Write contents to a specified file

    Args:
        outfile (str): path to the file to write to
        contents (list[str]): list of strings to write to a file
        verbose (bool) [optional]: print output describing processing
            steps to stdout. Otherwise silent. Default: False
    '''
    if verbose:
        print('Writing {0}...'.format(outfile))
    try:
        with open(outfile, 'w', encoding='utf-8', newline='\n') as f:
            f.writelines(contents)
    except (IOError, OSError) as err:
        raise OutputError('Could not write {0}: {1}'.format(outfile, err))


def trial_lines(result):
    ret = [_csv_line(TRIAL_HEADER)]
    for rec in result.records:
        ret.append(_csv_line([rec.n, rec.D, rec.r, rec.trial, rec.true_excess, rec.empirical_excess,
                              rec.ratio, rec.sup_dist, rec.chi, rec.degenerate]))
    return ret


def summary_lines(result):
    '''Summary rows; cells without non-degenerate trials have NaN
    statistics and coverage.'''
    ret = [_csv_line(SUMMARY_HEADER)]
    for cell in result.cells.values():
        fields = [cell.n, cell.D, cell.r, cell.trials, cell.non_degenerate, cell.degenerate, cell.K1M_sq,
                  cell.target, cell.bias, cell.mean_true, cell.mean_emp, cell.ratio_median, cell.ratio_mean,
                  cell.sup_median, cell.sup_q99, cell.chi2_mean, cell.chi2_se, cell.chi2_expected,
                  cell.iqr_true, cell.iqr_emp]
        fields += [cell.coverage_true[e] for e in COVERAGE_LADDER]
        fields += [cell.coverage_emp[e] for e in COVERAGE_LADDER]
        ret.append(_csv_line(fields))
    return ret


def ratio_lines(result):
    ret = [_csv_line(['n', 'D', 'ratio_median', 'ratio_mean'])]
    for cell in result.cells.values():
        ret.append(_csv_line([cell.n, cell.D, cell.ratio_median, cell.ratio_mean]))
    return ret


def coverage_lines(result):
    ret = [_csv_line(['n', 'D', 'e', 'coverage_true', 'coverage_emp'])]
    for cell in result.cells.values():
        for e in COVERAGE_LADDER:
            ret.append(_csv_line([cell.n, cell.D, e, cell.coverage_true[e], cell.coverage_emp[e]]))
    return ret


def rate_lines(result):
    ret = [_csv_line(['n', 'D', 'log_rate', 'log_sup_q99'])]
    if result.cells:
        for n, D, abscissa, ordinate in sup_norm_rate_points(result):
            ret.append(_csv_line([n, D, float(abscissa), float(ordinate)]))
    return ret


def emit_summaries(result, out_dir, verbose=False):
    '''Write the summary and plot-data files of a result.

    Returns:
        dict[str:str]: output name to path
    '''
    files = dict()
    for name, lines in ((SUMMARY_FILE, summary_lines), (RATIO_FILE, ratio_lines),
                        (COVERAGE_FILE, coverage_lines), (RATE_FILE, rate_lines)):
        path = os.path.join(out_dir, name)
        _write_file(path, lines(result), verbose=verbose)
        files[name] = path
    return files


def emit_outputs(result, out_dir, source=None, wall_clock=0.0, verbose=False):
    '''Write every output file of a run into a directory.

    Args:
        result (ExperimentResult): the experiment
        out_dir (str): created when missing
        source (configparser.ConfigParser) [optional]: configuration to
            echo as config.ini
        wall_clock (float) [optional]: seconds the run took
        verbose (bool) [optional]: print output describing processing
            steps to stdout. Otherwise silent. Default: False

    Returns:
        RunManifest: the run's manifest, also written as manifest.json
    '''
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        raise OutputError('Could not create {0}: {1}'.format(out_dir, err))
    files = dict()
    path = os.path.join(out_dir, TRIALS_FILE)
    _write_file(path, trial_lines(result), verbose=verbose)
    files[TRIALS_FILE] = path
    files.update(emit_summaries(result, out_dir, verbose=verbose))
    config_text = ''
    if source is not None:
        path = os.path.join(out_dir, CONFIG_FILE)
        try:
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                source.write(f)
        except (IOError, OSError) as err:
            raise OutputError('Could not write {0}: {1}'.format(path, err))
        with open(path, encoding='utf-8') as f:
            config_text = f.read()
        files[CONFIG_FILE] = path
    seed = result.config.seed if result.config is not None else None
    manifest = RunManifest(config_text, __version__, wall_clock, seed, dict(files))
    path = os.path.join(out_dir, MANIFEST_FILE)
    _write_file(path, [json.dumps(manifest.to_dict(), indent=2, sort_keys=True), '\n'], verbose=verbose)
    manifest.files[MANIFEST_FILE] = path
    if verbose:
        print('Writing complete\n')
    return manifest


def read_trials(path, grid=None, degree=None):
    '''Read the per-trial records back from a trials CSV. The conditioning
    estimate and the bias are not part of the file and come back as NaN.

    Args:
        path (str): the trials CSV
        grid (list[(int, int)]) [optional]: the (n, D) cells every row
            must belong to
        degree (int) [optional]: the degree r every row must carry

    Returns:
        list[RiskRecord]: the records in file order
    '''
    cells = set(grid) if grid is not None else None
    records = list()
    with open(path, encoding='utf-8') as f:
        header = f.readline().strip().split(',')
        if header != TRIAL_HEADER:
            raise ConfigParseError('{0} does not start with the header {1}'.format(path, ','.join(TRIAL_HEADER)),
                                   line=1)
        for number, line in enumerate(f, start=2):
            if not line.strip():
                continue
            fields = line.strip().split(',')
            if len(fields) != len(TRIAL_HEADER):
                raise ConfigParseError('{0}: expected {1} fields, got {2}'.format(path, len(TRIAL_HEADER),
                                                                                 len(fields)), line=number)
            n, D, r = int(fields[0]), int(fields[1]), int(fields[2])
            if cells is not None and (n, D) not in cells:
                raise ConfigParseError('{0}: cell (n={1}, D={2}) is not in the configured grid'.format(path, n, D),
                                       section='experiment', field='cells', line=number)
            if degree is not None and r != degree:
                raise ConfigParseError('{0}: degree {1} does not match the configured degree {2}'.format(
                    path, r, degree), section='model', field='degree', line=number)
            records.append(RiskRecord(
                n=n,
                D=D,
                r=r,
                trial=int(fields[3]),
                true_excess=float(fields[4]),
                empirical_excess=float(fields[5]),
                bias=float('nan'),
                sup_dist=float(fields[7]),
                chi=float(fields[8]),
                degenerate=fields[9] == '1',
                cond_estimate=float('nan'),
            ))
    return records


def resolve_threads(threads):
    '''--threads, else the environment variable, else 1; 0 means every core.'''
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads < 0:
        raise ValueError('Thread count must be nonnegative, got {0}'.format(threads))
    return threads


def print_checks(result, verbose=True):
    '''Run the bound checks that the grid supports and print their reports.'''
    report = check_first_order(result)
    small = check_small_models(result)
    if verbose:
        print('First-order check:')
        print(''.join(report.lines()))
        print('Small-model check:')
        print(''.join(small.lines()))
    try:
        rate = check_sup_norm_rate(result)
        if verbose:
            print('Sup-norm rate:\trho={0:.4g}\tkappa={1:.4g}\n'.format(rate.rho, rate.kappa))
    except DegenerateRegressionError as err:
        if verbose:
            print('WARNING: {0}'.format(err))


def parse_args(argv):
    import argparse
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-q', '--quiet', action='store_true', default=False,
                        help='do not print progress and reports to stdout. Default: %(default)s')
    parser = argparse.ArgumentParser(prog='excess_risk_lab',
                                     description='Monte-Carlo excess-risk lab for least-squares estimators '
                                                 'on partition models')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True
    run = subparsers.add_parser('run', parents=[common], help='run an experiment and write its outputs')
    run.add_argument('-c', '--config', help='experiment configuration file', required=True)
    run.add_argument('-o', '--out', help='output directory', required=True)
    run.add_argument('-s', '--seed', type=int, default=None,
                     help='global seed, overrides the config. Default: the config seed')
    run.add_argument('-t', '--threads', type=int, default=None,
                     help='worker threads, 0 for one per core. Default: ${0} or 1'.format(THREADS_ENV))
    check = subparsers.add_parser('check', parents=[common], help='validate a configuration file only')
    check.add_argument('-c', '--config', help='experiment configuration file', required=True)
    check.add_argument('-s', '--seed', type=int, default=None, help='global seed, overrides the config')
    report = subparsers.add_parser('report', parents=[common],
                                   help='recompute summaries from the per-trial records of a run')
    report.add_argument('-o', '--out', help='the run directory', required=True)
    report.add_argument('-c', '--config', default=None,
                        help='experiment configuration file. Default: config.ini of the run directory')
    return parser.parse_args(argv)


def run_cli(argv):
    '''Run one subcommand.

    Args:
        argv (list[str]): the arguments, without the program name

    Returns:
        int: 0 on success, 1 on a configuration error, 2 when a check
            has too few non-degenerate trials
    '''
    args = parse_args(argv)
    verbose = not args.quiet
    try:
        if args.command == 'check':
            config = parse_config(args.config, seed=args.seed)
            if verbose:
                print('Configuration {0} is valid: {1} cells, r={2}, regime {3}'.format(
                    args.config, len(config.grid), config.degree, config.regime))
            return EXIT_OK

        if args.command == 'run':
            threads = resolve_threads(args.threads)
            config = parse_config(args.config, seed=args.seed)
            if verbose:
                print('Running experiment. Details:')
                print('Config:\t\t\t{0}'.format(args.config))
                print('Output directory:\t{0}'.format(args.out))
                print('Seed:\t\t\t{0}'.format(config.seed))
                print('Threads:\t\t{0}'.format(threads))
                print('Trials per cell:\t{0}\n'.format(config.trials))
            source = ConfigReader(args.config).parser
            source.set('experiment', 'seed', str(config.seed))
            start = time.time()
            result = run_experiment(config, threads=threads, verbose=verbose)
            emit_outputs(result, args.out, source=source, wall_clock=time.time() - start, verbose=verbose)
        else:
            config_path = args.config or os.path.join(args.out, CONFIG_FILE)
            config = parse_config(config_path)
            if verbose:
                print('Recomputing summaries. Details:')
                print('Config:\t\t\t{0}'.format(config_path))
                print('Run directory:\t\t{0}\n'.format(args.out))
            records = read_trials(os.path.join(args.out, TRIALS_FILE), grid=config.grid, degree=config.degree)
            result = summarize(config, records)
            emit_summaries(result, args.out, verbose=verbose)
        print_checks(result, verbose=verbose)
    except InsufficientDataError as err:
        print('ERROR: {0}'.format(err), file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (ConfigParseError, ConfigurationError, RegimeError, InvalidPartitionError, DegeneratePartitionError,
            ConditioningError, AssumptionError, OutputError, ValueError) as err:
        print('ERROR: {0}'.format(err), file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main():
    sys.exit(run_cli(sys.argv[1:]))


class ConfigParseError(ValueError):
    '''An Error caused when a configuration file cannot be parsed.

    Attributes:
        section (str or None), field (str or None), line (int or None):
            where the problem is
    '''
    def __init__(self, message, section=None, field=None, line=None):
        super(ConfigParseError, self).__init__(message)
        self.section = section
        self.field = field
        self.line = line

class OutputError(IOError):
    '''An Error caused when an output file cannot be written.'''
    pass


if __name__ == '__main__':
    main()
