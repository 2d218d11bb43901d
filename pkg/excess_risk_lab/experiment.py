#!usr/bin/env python
'''
excess_risk_lab/experiment.py

This file contains the Monte-Carlo engine: it runs repeated trials of
(sample, fit, measure) over a grid of (n, D) cells, aggregates the risk
records per cell, and checks the first-order equivalence of the true and
empirical excess risks with (D / 4n) K_{1,M}^2, the sup-norm consistency
rate of s_n and the upper bounds for small models.

Quantiles are empirical quantiles by linear interpolation of the order
statistics (type 7). Degenerate trials are kept in the records and
counted, but excluded from every statistic.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''
from __future__ import print_function

import itertools
import sys
from collections import OrderedDict, defaultdict
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.stats

from excess_risk_lab.assumptions import check_assumptions
from excess_risk_lab.estimator import DEGENERACY_THRESHOLD, LeastSquaresEstimator, project_target, \
    sup_norm_distance
from excess_risk_lab.partition_basis import MAX_DEGREE, Partition, build_histogram_basis, build_poly_basis
from excess_risk_lab.problem_model import ConfigurationError, sample_dataset
from excess_risk_lab.risk_metrics import RiskRecord, chi_diagnostic, complexity_K1M, empirical_excess_risk, \
    model_bias, true_excess_risk

COVERAGE_LADDER = (0.5, 0.3, 0.2, 0.1)
SUMMARY_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
REGIMES = ('mid', 'small', 'none')
MIN_TRIALS = 100
SMALL_MODEL_TOLERANCE = 0.15
BOOTSTRAP_RESAMPLES = 400
ASYMMETRY_STANDARD_ERRORS = 3.0


def _log_squared(n):
    return np.log(n) ** 2 if n > 1 else 0.0


def dimension_bounds(n, regime, a_minus, a_plus):
    '''Admissible range of D at sample size n.

    mid:   a_minus (ln n)^2 <= D <= a_plus n / (ln n)^2
    small: 1 <= D <= a_plus n / (ln n)^2
    none:  1 <= D

    Returns:
        (float, float): the lower and upper bound
    '''
    log_sq = _log_squared(n)
    upper = a_plus * n / log_sq if log_sq > 0 else np.inf
    if regime == 'mid':
        return a_minus * log_sq, upper
    if regime == 'small':
        return 1.0, upper
    return 1.0, np.inf


def trial_seed(seed, n, D, trial):
    '''64-bit seed of one trial, mixed from (seed, n, D, trial) so that
    every cell of the grid and every trial is reproducible on its own.'''
    sequence = np.random.SeedSequence([int(seed), int(n), int(D), int(trial)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


class ExperimentConfig:
    '''Everything that determines an experiment.

    Attributes:
        problem (RegressionProblem): the ground truth
        degree (int): maximal degree r of the piecewise polynomials
        grid (list[(int, int)]): the (n, D) cells, in run order
        trials (int): trials T per cell
        alpha (float): confidence parameter, reported only
        seed (int): the global seed
        breakpoints (list[float] or None): a fixed partition; None means
            equal-width cells with D / (r + 1) cells
        regime (str): mid, small or none
        a_minus, a_plus (float): regime constants A_- and A_+
        degeneracy_threshold (float): ||L_{n,D}|| level flagging a fit
        min_trials (int): non-degenerate trials needed by the checks
        claims (list[str]): assumptions the problem must satisfy
    '''
    def __init__(self, problem, degree=0, grid=(), trials=100, alpha=2.0, seed=0, breakpoints=None,
                 regime='mid', a_minus=0.1, a_plus=1.0, degeneracy_threshold=DEGENERACY_THRESHOLD,
                 min_trials=MIN_TRIALS, claims=()):
        self.problem = problem
        self.degree = int(degree)
        self.grid = [(int(n), int(D)) for n, D in grid]
        self.trials = int(trials)
        self.alpha = float(alpha)
        self.seed = int(seed)
        self.breakpoints = None if breakpoints is None else list(breakpoints)
        self.regime = regime
        self.a_minus = float(a_minus)
        self.a_plus = float(a_plus)
        self.degeneracy_threshold = float(degeneracy_threshold)
        self.min_trials = int(min_trials)
        self.claims = list(claims)
        self._validate()

    def _validate(self):
        if self.degree < 0 or self.degree > MAX_DEGREE:
            raise ConfigurationError('degree must lie in 0..{0}, got {1}'.format(MAX_DEGREE, self.degree))
        if self.trials < 1:
            raise ConfigurationError('trials must be positive, got {0}'.format(self.trials))
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigurationError('seed must be an unsigned 64-bit integer, got {0}'.format(self.seed))
        if self.regime not in REGIMES:
            raise ConfigurationError('Unknown regime {0}, expected one of {1}'.format(self.regime, ', '.join(REGIMES)))
        if len(self.grid) == 0:
            raise ConfigurationError('The (n, D) grid is empty')
        if len(set(self.grid)) != len(self.grid):
            raise ConfigurationError('The (n, D) grid lists a cell twice: {0}'.format(self.grid))
        width = self.degree + 1
        for n, D in self.grid:
            if n < 1 or D < 1:
                raise ConfigurationError('Cell (n={0}, D={1}) needs n >= 1 and D >= 1'.format(n, D))
            if D % width != 0:
                raise ConfigurationError('D={0} is not a multiple of r + 1 = {1}'.format(D, width))
            if self.breakpoints is not None and D != width * (len(self.breakpoints) - 1):
                raise ConfigurationError('D={0} does not match the {1} given cells with r={2}'.format(
                    D, len(self.breakpoints) - 1, self.degree))
        violations = self.regime_violations()
        if violations:
            raise RegimeError('Dimension regime "{0}" violated: {1}'.format(self.regime, '; '.join(violations)))

    def regime_violations(self):
        '''Describe every (n, D) outside the admissible dimension range.'''
        ret = list()
        for n, D in self.grid:
            low, high = dimension_bounds(n, self.regime, self.a_minus, self.a_plus)
            if not low <= D <= high:
                ret.append('(n={0}, D={1}) outside [{2:.6g}, {3:.6g}] = '
                           '[A_- (ln n)^2, A_+ n / (ln n)^2] with A_-={4}, A_+={5}'.format(
                               n, D, low, high, self.a_minus, self.a_plus))
        return ret

    def partition_for(self, D):
        if self.breakpoints is not None:
            return Partition(self.breakpoints)
        return Partition.equal_width(D // (self.degree + 1))


class CellModel:
    '''The model-level quantities shared by every trial with dimension D.

    Attributes:
        basis (OrthonormalBasis): the model's basis
        coeff_projection (np.ndarray): beta_M
        complexity (ComplexityReport): K_{1,M}^2 without sample size
        bias (float): ||s_M - s*||_2^2
        assumptions (AssumptionReport): H1-H4 verdicts
    '''
    def __init__(self, config, D):
        problem = config.problem
        partition = config.partition_for(D)
        if config.degree == 0:
            self.basis = build_histogram_basis(partition, problem)
        else:
            self.basis = build_poly_basis(partition, problem, config.degree)
        self.coeff_projection = project_target(problem, self.basis)
        self.complexity = complexity_K1M(problem, self.basis, coeff_projection=self.coeff_projection)
        self.bias = model_bias(problem, self.basis, self.coeff_projection)
        self.assumptions = check_assumptions(problem, self.basis, coeff_projection=self.coeff_projection)

    def target(self, n):
        '''The first-order level (D / 4n) K_{1,M}^2.'''
        return self.basis.dimension * self.complexity.K1M_sq / (4.0 * n)


def build_models(config):
    '''One CellModel per distinct D of the grid.'''
    models = dict()
    for _, D in config.grid:
        if D not in models:
            models[D] = CellModel(config, D)
    return models


def _quantile(values, q):
    if len(values) == 0:
        return float('nan')
    return float(np.quantile(values, q))


def _iqr(values):
    if len(values) == 0:
        return float('nan')
    low, high = np.quantile(values, [0.25, 0.75], axis=-1)
    return high - low


def iqr_gap_standard_error(true, emp, target, resamples=BOOTSTRAP_RESAMPLES, seed=0):
    '''Bootstrap standard error of IQR(emp / target) - IQR(true / target),
    resampling trials in pairs.

    Args:
        true (np.ndarray): true excess risks of the kept trials
        emp (np.ndarray): empirical excess risks of the same trials
        target (float): the first-order level
        resamples (int) [optional]: bootstrap replicates. Default: 400
        seed (int or list[int]) [optional]: seed of the resampling

    Returns:
        float: the standard error, NaN with fewer than 2 trials
    '''
    true = np.asarray(true, dtype=float) / target
    emp = np.asarray(emp, dtype=float) / target
    if len(true) < 2:
        return float('nan')
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(true), size=(resamples, len(true)))
    gaps = _iqr(emp[picks]) - _iqr(true[picks])
    return float(np.std(gaps, ddof=1))


def coverage(values, target, ladder=COVERAGE_LADDER):
    '''Fraction of values within [(1 - e) target, (1 + e) target] for
    each e of the ladder; NaN when there are no values.'''
    values = np.asarray(values, dtype=float)
    ret = OrderedDict()
    for e in ladder:
        if len(values) == 0:
            ret[e] = float('nan')
        else:
            ret[e] = float(np.mean(np.abs(values / target - 1.0) <= e))
    return ret


class CellSummary:
    '''Aggregates of the non-degenerate trials of one (n, D) cell.

    Attributes:
        n, D, r (int): the cell
        trials (int): all trials of the cell
        non_degenerate (int), degenerate (int): the split of trials
        K1M_sq (float), target (float): K_{1,M}^2 and (D / 4n) K_{1,M}^2
        bias (float): ||s_M - s*||_2^2
        mean_true, mean_emp (float): means of the excess risks
        true_quantiles, emp_quantiles (OrderedDict[float:float]): the
            SUMMARY_QUANTILES of the excess risks
        ratio_median, ratio_mean (float): of true / empirical
        sup_median, sup_q99 (float): quantiles of ||s_n - s_M||_inf
        chi_mean, chi2_mean, chi2_se (float): chi_M moments and the
            standard error of mean(chi^2)
        chi2_expected (float): (D / n) K_{1,M}^2
        iqr_true, iqr_emp (float): interquartile ranges of the excess
            risks divided by the target
        coverage_true, coverage_emp (OrderedDict[float:float]): coverage
            ladders of the excess risks around the target
    '''
    def __init__(self, n, D, r, records, K1M_sq, bias):
        kept = [rec for rec in records if not rec.degenerate]
        self.n = n
        self.D = D
        self.r = r
        self.trials = len(records)
        self.non_degenerate = len(kept)
        self.degenerate = self.trials - self.non_degenerate
        self.K1M_sq = K1M_sq
        self.bias = bias
        self.target = D * K1M_sq / (4.0 * n)
        true = np.array([rec.true_excess for rec in kept])
        emp = np.array([rec.empirical_excess for rec in kept])
        ratios = np.array([rec.ratio for rec in kept])
        ratios = ratios[np.isfinite(ratios)]
        sup = np.array([rec.sup_dist for rec in kept])
        chi2 = np.array([rec.chi for rec in kept]) ** 2
        nan = float('nan')
        self.mean_true = float(np.mean(true)) if len(true) else nan
        self.mean_emp = float(np.mean(emp)) if len(emp) else nan
        self.true_quantiles = OrderedDict((q, _quantile(true, q)) for q in SUMMARY_QUANTILES)
        self.emp_quantiles = OrderedDict((q, _quantile(emp, q)) for q in SUMMARY_QUANTILES)
        self.ratio_median = _quantile(ratios, 0.5)
        self.ratio_mean = float(np.mean(ratios)) if len(ratios) else nan
        self.sup_median = _quantile(sup, 0.5)
        self.sup_q99 = _quantile(sup, 0.99)
        self.chi_mean = float(np.mean(np.sqrt(chi2))) if len(chi2) else nan
        self.chi2_mean = float(np.mean(chi2)) if len(chi2) else nan
        self.chi2_se = float(np.std(chi2, ddof=1) / np.sqrt(len(chi2))) if len(chi2) > 1 else nan
        self.chi2_expected = D * K1M_sq / n
        self.iqr_true = _quantile(true / self.target, 0.75) - _quantile(true / self.target, 0.25)
        self.iqr_emp = _quantile(emp / self.target, 0.75) - _quantile(emp / self.target, 0.25)
        self.coverage_true = coverage(true, self.target)
        self.coverage_emp = coverage(emp, self.target)

    @property
    def degenerate_fraction(self):
        return self.degenerate / float(self.trials) if self.trials else float('nan')


class ExperimentResult:
    '''Per-trial records and per-cell summaries of an experiment.

    Attributes:
        config (ExperimentConfig): what was run
        records (list[RiskRecord]): all trials, cell by cell in grid
            order and by trial index within a cell
        cells (OrderedDict[(int, int):CellSummary]): summaries in grid
            order
        complexities (dict[int:ComplexityReport]): K_{1,M} per D
    '''
    def __init__(self, config, records, cells, complexities):
        self.config = config
        self.records = records
        self.cells = cells
        self.complexities = complexities

    def records_for(self, n, D, degenerate=False):
        '''Records of a cell, non-degenerate only unless asked otherwise.'''
        return [rec for rec in self.records if rec.n == n and rec.D == D and (degenerate or not rec.degenerate)]


def summarize(config, records, models=None):
    '''Aggregate records into an ExperimentResult. The records are ordered
    by grid cell and trial index first, so the result does not depend on
    the order the trials finished in.

    Args:
        config (ExperimentConfig): the experiment
        records (list[RiskRecord]): the trials
        models (dict[int:CellModel]) [optional]: rebuilt when missing

    Returns:
        ExperimentResult: records and summaries
    '''
    if models is None:
        models = build_models(config)
    position = dict((cell, index) for index, cell in enumerate(config.grid))
    stray = sorted(set((rec.n, rec.D) for rec in records) - set(position))
    if stray:
        raise ConfigurationError('Records for cells outside the grid: {0}'.format(
            ', '.join('(n={0}, D={1})'.format(n, D) for n, D in stray)))
    records = sorted(records, key=lambda rec: (position[(rec.n, rec.D)], rec.trial))
    grouped = defaultdict(list)
    for rec in records:
        grouped[(rec.n, rec.D)].append(rec)
    cells = OrderedDict()
    for n, D in config.grid:
        model = models[D]
        cells[(n, D)] = CellSummary(n, D, config.degree, grouped[(n, D)], model.complexity.K1M_sq, model.bias)
    complexities = dict((D, model.complexity) for D, model in models.items())
    return ExperimentResult(config, records, cells, complexities)


class TrialRunner:
    '''Runs the trials of one (n, D) cell.

    Attributes:
        config (ExperimentConfig): the experiment
        n, D (int): the cell
        model (CellModel): basis, projection and complexity for D
    '''
    def __init__(self, config, n, D, model):
        self.config = config
        self.n = n
        self.D = D
        self.model = model
        self.estimator = LeastSquaresEstimator(model.basis, model.coeff_projection,
                                               threshold=config.degeneracy_threshold)

    def __call__(self, trial):
        config = self.config
        basis = self.model.basis
        dataset = sample_dataset(config.problem, self.n, trial_seed(config.seed, self.n, self.D, trial))
        fit = self.estimator.fit(dataset)
        return RiskRecord(
            n=self.n,
            D=self.D,
            r=config.degree,
            trial=trial,
            true_excess=true_excess_risk(fit),
            empirical_excess=empirical_excess_risk(dataset, fit, basis),
            bias=self.model.bias,
            sup_dist=sup_norm_distance(fit, basis),
            chi=chi_diagnostic(dataset, basis, config.problem, coeff_projection=self.model.coeff_projection),
            degenerate=fit.degenerate,
            cond_estimate=fit.cond_estimate,
        )


def run_experiment(config, threads=1, verbose=False):
    '''Run every trial of every (n, D) cell and aggregate.

    Args:
        config (ExperimentConfig): the experiment
        threads (int) [optional]: worker threads; trials of a cell are
            spread over them. Default: 1
        verbose (bool) [optional]: print progress to stdout. Otherwise
            silent. Default: False

    Returns:
        ExperimentResult: records and summaries, identical for any
            number of threads
    '''
    if verbose:
        print('Building {0} models of degree {1}...'.format(len(set(D for _, D in config.grid)), config.degree))
    models = build_models(config)
    for D, model in sorted(models.items()):
        model.assumptions.require(config.claims)
        if verbose:
            print('D={0}\tK_1M^2={1:.6g}\tr_M={2:.6g}\tbias={3:.6g}'.format(
                D, model.complexity.K1M_sq, model.basis.localization_const, model.bias))
    if verbose:
        print('Models built\n')

    records = list()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for n, D in config.grid:
            if verbose:
                print('Running {0} trials for n={1}, D={2}...'.format(config.trials, n, D))
            runner = TrialRunner(config, n, D, models[D])
            results = pool.map(runner, range(config.trials)) if pool else map(runner, range(config.trials))
            dots_on_line = 0
            step = max(config.trials // 40, 1)
            for index, record in enumerate(results):
                records.append(record)
                if verbose and index % step == 0:
                    if dots_on_line == 40:
                        print('')
                        dots_on_line = 0
                    print('.', end='')
                    dots_on_line += 1
                    sys.stdout.flush()
            if verbose:
                print('')
    finally:
        if pool is not None:
            pool.shutdown()

    result = summarize(config, records, models)
    for cell in result.cells.values():
        if cell.degenerate_fraction > 0.01:
            print('WARNING: {0} of {1} trials are degenerate for n={2}, D={3}'.format(
                cell.degenerate, cell.trials, cell.n, cell.D), file=sys.stderr)
    if verbose:
        print('Experiment complete\n')
    return result


def _targets(result, target):
    if target is None:
        return dict((key, cell.target) for key, cell in result.cells.items())
    if isinstance(target, dict):
        return target
    return dict((key, float(target)) for key in result.cells)


def _fit_line(x, y):
    fit = scipy.stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept)


class BoundsReport:
    '''Outcome of a bound check.

    Attributes:
        cells (OrderedDict[(int, int):dict]): per-cell statistics
        slopes (dict[str:float or None]): fitted trend slopes; None when
            the grid does not allow a fit
        bounded (bool or None): verdict of checks that produce one
    '''
    def __init__(self, cells, slopes, bounded=None):
        self.cells = cells
        self.slopes = slopes
        self.bounded = bounded

    def lines(self):
        '''Tab-separated lines for console output.'''
        ret = list()
        for (n, D), stats in self.cells.items():
            fields = ['{0}={1:.4g}'.format(key, value) for key, value in sorted(stats.items())
                      if isinstance(value, float)]
            ret.append('n={0}\tD={1}\t{2}\n'.format(n, D, '\t'.join(fields)))
        for name, slope in sorted(self.slopes.items(), key=lambda item: str(item[0])):
            ret.append('slope[{0}]\t{1}\n'.format(name, 'n/a' if slope is None else '{0:.4g}'.format(slope)))
        if self.bounded is not None:
            ret.append('bounded\t{0}\n'.format(self.bounded))
        return ret


def check_first_order(result, target=None, min_trials=None):
    '''Compare both excess risks with the first-order level.

    Args:
        result (ExperimentResult): the experiment
        target (float or dict[(int, int):float]) [optional]: the level
            per cell. Default: (D / 4n) K_{1,M}^2 of each cell
        min_trials (int) [optional]: non-degenerate trials required per
            cell. Default: the config's min_trials

    Returns:
        BoundsReport: per cell, coverage of true / target and
            empirical / target within 1 +- e for e in COVERAGE_LADDER,
            the median and mean of true / empirical, and the slopes of
            the log 0.9-quantile of |risk / target - 1| against
            log max((ln n / D)^(1/4), (D ln n / n)^(1/4))
            bounded is True when in every cell the IQR of
            empirical / target stays within 3 bootstrap standard errors
            above the IQR of true / target
    '''
    if min_trials is None:
        min_trials = result.config.min_trials
    targets = _targets(result, target)
    short = [(key, cell.non_degenerate) for key, cell in result.cells.items() if cell.non_degenerate < min_trials]
    if short:
        raise InsufficientDataError('Fewer than {0} non-degenerate trials in cells {1}'.format(
            min_trials, ', '.join('(n={0}, D={1}): {2}'.format(key[0], key[1], count) for key, count in short)))
    cells = OrderedDict()
    abscissae = list()
    true_dev = list()
    emp_dev = list()
    asymmetry = list()
    for (n, D) in result.cells:
        kept = result.records_for(n, D)
        level = targets[(n, D)]
        true = np.array([rec.true_excess for rec in kept])
        emp = np.array([rec.empirical_excess for rec in kept])
        ratios = np.array([rec.ratio for rec in kept])
        ratios = ratios[np.isfinite(ratios)]
        stats = dict()
        for e, value in coverage(true, level).items():
            stats['coverage_true_e{0}'.format(e)] = value
        for e, value in coverage(emp, level).items():
            stats['coverage_emp_e{0}'.format(e)] = value
        stats['ratio_median'] = _quantile(ratios, 0.5)
        stats['ratio_mean'] = float(np.mean(ratios)) if len(ratios) else float('nan')
        stats['target'] = float(level)
        stats['iqr_true'] = float(_iqr(true / level))
        stats['iqr_emp'] = float(_iqr(emp / level))
        stats['iqr_gap_se'] = iqr_gap_standard_error(true, emp, level, seed=[result.config.seed, n, D])
        asymmetry.append(not stats['iqr_emp'] > stats['iqr_true'] + ASYMMETRY_STANDARD_ERRORS * stats['iqr_gap_se'])
        cells[(n, D)] = stats
        log_n = np.log(n)
        abscissae.append(np.log(max((log_n / D) ** 0.25, (D * log_n / n) ** 0.25)))
        true_dev.append(np.log(_quantile(np.abs(true / level - 1.0), 0.9)))
        emp_dev.append(np.log(_quantile(np.abs(emp / level - 1.0), 0.9)))
    slopes = {'true_deviation': None, 'emp_deviation': None}
    if len(set(abscissae)) >= 2 and np.all(np.isfinite(true_dev)) and np.all(np.isfinite(emp_dev)):
        slopes['true_deviation'] = _fit_line(abscissae, true_dev)[0]
        slopes['emp_deviation'] = _fit_line(abscissae, emp_dev)[0]
    return BoundsReport(cells, slopes, all(asymmetry) if asymmetry else None)


class RateReport:
    '''Fit of log q(||s_n - s_M||_inf) = kappa + rho log sqrt(D ln n / n).

    Attributes:
        rho (float): the fitted exponent
        kappa (float): the fitted intercept
        quantile (float): the quantile level of sup_dist used
        points (list[(int, int, float, float)]): (n, D, abscissa,
            ordinate) of every grid cell used in the fit
    '''
    def __init__(self, rho, kappa, quantile, points):
        self.rho = rho
        self.kappa = kappa
        self.quantile = quantile
        self.points = points


def sup_norm_rate_points(result, quantile=0.99):
    '''(n, D, log sqrt(D ln n / n), log q(sup_dist)) per cell with data.'''
    points = list()
    for (n, D), cell in result.cells.items():
        sup = [rec.sup_dist for rec in result.records_for(n, D)]
        if len(sup) == 0 or n < 2:
            continue
        value = _quantile(sup, quantile)
        if value <= 0:
            continue
        points.append((n, D, 0.5 * np.log(D * np.log(n) / n), float(np.log(value))))
    return points


def check_sup_norm_rate(result, quantile=0.99):
    '''Fit the sup-norm consistency rate across the grid by ordinary least
    squares; rho close to 1 with a stable kappa supports consistency at
    rate sqrt(D ln n / n).

    Args:
        result (ExperimentResult): the experiment
        quantile (float) [optional]: quantile of sup_dist. Default: 0.99

    Returns:
        RateReport: rho, kappa and the fitted points
    '''
    points = sup_norm_rate_points(result, quantile)
    abscissae = [point[2] for point in points]
    if len(set(abscissae)) < 3:
        raise DegenerateRegressionError('The sup-norm rate fit needs 3 distinct values of D ln n / n, got {0}'.format(
            len(set(abscissae))))
    rho, kappa = _fit_line(abscissae, [point[3] for point in points])
    return RateReport(rho, kappa, quantile, points)


def check_small_models(result, tolerance=SMALL_MODEL_TOLERANCE):
    '''Check the (D v ln n) / n upper bound for small models.

    Args:
        result (ExperimentResult): the experiment
        tolerance (float) [optional]: allowed |slope| of the log of the
            scaled maxima against log n. Default: 0.15

    Returns:
        BoundsReport: per cell the maxima of true_excess * n / (D v ln n)
            and empirical_excess * n / (D v ln n); per D the slopes of
            their logs against log n (keys ('true', D) and ('emp', D));
            bounded is True when every slope lies within the tolerance
    '''
    cells = OrderedDict()
    series = defaultdict(list)
    for (n, D) in result.cells:
        kept = result.records_for(n, D)
        scale = n / max(D, np.log(n))
        max_true = max([rec.true_excess * scale for rec in kept]) if kept else float('nan')
        max_emp = max([rec.empirical_excess * scale for rec in kept]) if kept else float('nan')
        cells[(n, D)] = {'max_true_scaled': float(max_true), 'max_emp_scaled': float(max_emp)}
        if kept and max_true > 0 and max_emp > 0:
            series[D].append((np.log(n), np.log(max_true), np.log(max_emp)))
    slopes = dict()
    for D, points in series.items():
        if len(set(point[0] for point in points)) < 2:
            continue
        slopes[('true', D)] = _fit_line([p[0] for p in points], [p[1] for p in points])[0]
        slopes[('emp', D)] = _fit_line([p[0] for p in points], [p[2] for p in points])[0]
    bounded = all(abs(slope) <= tolerance for slope in slopes.values()) if slopes else None
    return BoundsReport(cells, slopes, bounded)


def degeneracy_sensitivity(result, thresholds=(0.5, 0.7, 0.9)):
    '''Recount degenerate trials per cell for other ||L_{n,D}||
    thresholds, from the cond_estimate stored with each trial.

    Returns:
        OrderedDict[(int, int):OrderedDict[float:int]]: the counts
    '''
    ret = OrderedDict()
    for (n, D) in result.cells:
        records = result.records_for(n, D, degenerate=True)
        ret[(n, D)] = OrderedDict((threshold, sum(1 for rec in records if rec.cond_estimate > threshold))
                                  for threshold in thresholds)
    return ret


def brute_force_empirical_excess(problem, partition, n):
    '''Exact mean of the regressogram's empirical excess risk given that
    every cell holds a sample point, by enumerating all (cell, sign)
    outcomes of the n observations.

    Requires Rademacher noise and s*, sigma constant on every cell, so
    that a response only depends on the cell and the sign of its noise.

    Args:
        problem (RegressionProblem): the ground truth
        partition (Partition): the histogram's cells
        n (int): the sample size

    Returns:
        (float, float): the conditional mean and the probability that
            every cell is hit
    '''
    if problem.noise_shape != 'rademacher':
        raise ConfigurationError('Enumeration needs Rademacher noise, got {0}'.format(problem.noise_shape))
    for function in (problem.target, problem.noise_level):
        if function.degree > 0 or not np.all(np.isin(function.breakpoints, partition.breakpoints)):
            raise ConfigurationError('Enumeration needs s* and sigma constant on every cell')
    outcomes = (2 * partition.size) ** n
    if outcomes > 10 ** 6:
        raise ConfigurationError('Enumeration over {0} outcomes is too large'.format(outcomes))
    density = problem.design_density
    masses = [density.mass(partition.breakpoints[k], partition.breakpoints[k + 1]) for k in range(partition.size)]
    mids = 0.5 * (partition.breakpoints[:-1] + partition.breakpoints[1:])
    levels = problem.target(mids)
    sigmas = problem.noise_level(mids)
    total = 0.0
    hit_probability = 0.0
    choices = [(k, sign) for k in range(partition.size) for sign in (1.0, -1.0)]
    for outcome in itertools.product(choices, repeat=n):
        cells = np.array([k for k, _ in outcome])
        if len(np.unique(cells)) < partition.size:
            continue
        probability = np.prod([0.5 * masses[k] for k in cells])
        y = np.array([levels[k] + sigmas[k] * sign for k, sign in outcome])
        means = np.bincount(cells, weights=y, minlength=partition.size) / np.bincount(cells, minlength=partition.size)
        value = np.mean((y - levels[cells]) ** 2 - (y - means[cells]) ** 2)
        total += probability * value
        hit_probability += probability
    if hit_probability == 0:
        return float('nan'), 0.0
    return total / hit_probability, hit_probability


class RegimeError(ValueError):
    '''An Error caused when an (n, D) cell lies outside the declared
    dimension regime.'''
    pass

class InsufficientDataError(ValueError):
    '''An Error caused when a check has too few non-degenerate trials.'''
    pass

class DegenerateRegressionError(ValueError):
    '''An Error caused when a rate fit has fewer than 3 distinct
    abscissae.'''
    pass
