#!usr/bin/env python
'''
excess_risk_lab/risk_metrics.py

This file contains the risk quantities of a fit on a partition model:
the linear / quadratic decomposition of the least-squares contrast
around s_M, the true excess risk P(K s_n - K s_M), the empirical excess
risk P_n(K s_M - K s_n), the normalized complexity K_{1,M}^2 and the
fluctuation diagnostic chi_M.

With psi_{1,M}(x, y) = -2 (y - s_M(x)) and psi_2(t) = t^2,
(K s)(x, y) - (K s_M)(x, y) = psi_{1,M}(x, y) (s - s_M)(x) + psi_2((s - s_M)(x)).

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''
from __future__ import print_function

from collections import namedtuple

import numpy as np

from excess_risk_lab.estimator import cell_sums, project_target
from excess_risk_lab.partition_basis import Quadrature

RECORD_FIELDS = ['n', 'D', 'r', 'trial', 'true_excess', 'empirical_excess', 'bias',
                 'sup_dist', 'chi', 'degenerate', 'cond_estimate']


class RiskRecord(namedtuple('RiskRecord', RECORD_FIELDS)):
    '''The risk numbers of one Monte-Carlo trial.

    Attributes:
        n (int), D (int), r (int), trial (int): where the trial belongs
        true_excess (float): P(K s_n - K s_M) = ||s_n - s_M||_2^2
        empirical_excess (float): P_n(K s_M - K s_n)
        bias (float): ||s_M - s*||_2^2
        sup_dist (float): ||s_n - s_M||_inf
        chi (float): chi_M
        degenerate (bool): the fit left the conditioning event
        cond_estimate (float): ||L_{n,D}|| of the fit
    '''
    __slots__ = ()

    @property
    def ratio(self):
        '''true_excess / empirical_excess, NaN when the latter is 0.'''
        if self.empirical_excess == 0:
            return float('nan')
        return self.true_excess / self.empirical_excess


def contrast_parts(basis, fit, x, y):
    '''Linear and quadratic parts of K s_n - K s_M at the points (x, y).

    Args:
        basis (OrthonormalBasis): the model's basis
        fit (FitResult): supplies s_M and s_n
        x (np.ndarray): design points
        y (np.ndarray): responses

    Returns:
        (np.ndarray, np.ndarray): psi_{1,M}(x, y) (s_n - s_M)(x) and
            (s_n - s_M)(x)^2
    '''
    y = np.asarray(y, dtype=float)
    s_m = basis.evaluate(fit.coeff_projection, x)
    gap = basis.evaluate(fit.difference, x)
    return -2.0 * (y - s_m) * gap, gap ** 2


def true_excess_risk(fit):
    '''||s_n - s_M||_2^2 = sum_k (beta^(n)_k - beta_M,k)^2 by orthonormality.'''
    return float(np.sum(fit.difference ** 2))


def empirical_excess_risk(dataset, fit, basis):
    '''P_n(K s_M - K s_n) = (1/n) sum_i (y_i - s_M(x_i))^2 - (y_i - s_n(x_i))^2.'''
    if dataset.n == 0:
        return 0.0
    s_m = basis.evaluate(fit.coeff_projection, dataset.x)
    s_n = basis.evaluate(fit.coeff_estimator, dataset.x)
    return float(np.mean((dataset.y - s_m) ** 2 - (dataset.y - s_n) ** 2))


def quadrature_excess_risk(problem, basis, fit):
    '''int (s_n - s_M)^2 f by quadrature, the certificate for the
    coefficient-space formula.'''
    quadrature = Quadrature.for_problem(basis.partition, problem,
                                        2 * basis.degree + problem.design_density.function.degree)
    gap = basis.evaluate(fit.difference, quadrature.nodes)
    return quadrature.integrate(gap ** 2 * problem.design_density(quadrature.nodes))


def model_bias(problem, basis, coeff_projection):
    '''||s_M - s*||_2^2 = P(K s_M - K s*).'''
    degree = 2 * max(basis.degree, problem.target.degree) + problem.design_density.function.degree
    quadrature = Quadrature.for_problem(basis.partition, problem, degree)
    nodes = quadrature.nodes
    gap = basis.evaluate(coeff_projection, nodes) - problem.target(nodes)
    return quadrature.integrate(gap ** 2 * problem.design_density(nodes))


def centering_residual(problem, basis, coeff_projection):
    '''max_k |P(psi_{1,M} phi_k)|, using E[psi_{1,M} | X] = -2 (s* - s_M)(X).'''
    degree = max(basis.degree, problem.target.degree) + basis.degree + problem.design_density.function.degree
    quadrature = Quadrature.for_problem(basis.partition, problem, degree)
    nodes = quadrature.nodes
    cells, values = basis.values(nodes)
    psi = -2.0 * (problem.target(nodes) - basis.evaluate(coeff_projection, nodes))
    weights = quadrature.weights * problem.design_density(nodes) * psi
    return float(np.max(np.abs(cell_sums(cells, values, weights, basis.partition.size))))


class ComplexityReport:
    '''The normalized complexity of a model.

    Attributes:
        K1M_sq (float): K_{1,M}^2 = 4 E[(sigma^2 + (s_M - s*)^2)(X) Psi_M^2(X)]
        per_basis_terms (np.ndarray): Var(psi_{1,M} phi_k), k = 1..D
        closed_form_histogram (float or None): the per-cell conditional
            variance formula, degree 0 models only
        dimension (int): D
        n (int or None): the sample size the first-order level refers to
        ideal_first_order (float or None): (D / 4n) K_{1,M}^2
        complexity (float): C_M = (D / 4) K_{1,M}^2
    '''
    def __init__(self, K1M_sq, per_basis_terms, dimension, n=None, closed_form_histogram=None):
        self.K1M_sq = float(K1M_sq)
        self.per_basis_terms = np.asarray(per_basis_terms)
        self.closed_form_histogram = closed_form_histogram
        self.dimension = dimension
        self.n = n
        self.complexity = dimension * self.K1M_sq / 4.0
        self.ideal_first_order = None if n is None else self.complexity / n

    def within_bounds(self, problem, tol=1e-12):
        '''Check 4 sigma_min^2 <= K_{1,M}^2 <= 36 A^2.'''
        low = 4.0 * problem.sigma_min ** 2
        high = 36.0 * problem.bound_A ** 2
        return low * (1 - tol) <= self.K1M_sq <= high * (1 + tol)


def complexity_K1M(problem, basis, n=None, coeff_projection=None):
    '''Compute K_{1,M}^2 and its per-basis decomposition by quadrature.

    The conditional second moment of psi_{1,M} given X is
    4 (sigma^2 + (s_M - s*)^2)(X) and P(psi_{1,M} phi_k) = 0, so
    Var(psi_{1,M} phi_k) = 4 int (sigma^2 + (s_M - s*)^2) phi_k^2 f.

    Args:
        problem (RegressionProblem): the ground truth
        basis (OrthonormalBasis): orthonormal basis of the model
        n (int) [optional]: sample size for the first-order level
        coeff_projection (np.ndarray) [optional]: beta_M, computed when
            not given

    Returns:
        ComplexityReport: the complexity numbers
    '''
    if coeff_projection is None:
        coeff_projection = project_target(problem, basis)
    inner = max(problem.noise_level.degree, basis.degree, problem.target.degree)
    degree = 2 * inner + 2 * basis.degree + problem.design_density.function.degree
    quadrature = Quadrature.for_problem(basis.partition, problem, degree)
    nodes = quadrature.nodes
    density = problem.design_density(nodes)
    sigma_sq = problem.noise_level(nodes) ** 2
    target = problem.target(nodes)
    moment = sigma_sq + (basis.evaluate(coeff_projection, nodes) - target) ** 2
    cells, values = basis.values(nodes)
    per_basis = 4.0 * cell_sums(cells, values ** 2, quadrature.weights * density * moment,
                                basis.partition.size).ravel()
    envelope_sq = np.sum(values ** 2, axis=1) / basis.dimension
    K1M_sq = 4.0 * quadrature.integrate(moment * envelope_sq * density)

    closed_form = None
    if basis.degree == 0:
        masses = quadrature.integrate_by_cell(density)
        mean_sigma_sq = quadrature.integrate_by_cell(density * sigma_sq) / masses
        cell_means = quadrature.integrate_by_cell(density * target) / masses
        spread = quadrature.integrate_by_cell(density * (target - cell_means[quadrature.cells]) ** 2) / masses
        closed_form = float(4.0 * np.mean(mean_sigma_sq + spread))
    return ComplexityReport(K1M_sq, per_basis, basis.dimension, n=n, closed_form_histogram=closed_form)


def chi_diagnostic(dataset, basis, problem, coeff_projection=None):
    '''chi_M = sqrt(sum_k ((P_n - P)(psi_{1,M} phi_k))^2).

    P(psi_{1,M} phi_k) = 0, so only the empirical averages
    (1/n) sum_i -2 (y_i - s_M(x_i)) phi_k(x_i) are needed.
    '''
    if dataset.n == 0:
        return 0.0
    if coeff_projection is None:
        coeff_projection = project_target(problem, basis)
    cells, values = basis.values(dataset.x)
    psi = -2.0 * (dataset.y - basis.evaluate(coeff_projection, dataset.x))
    averages = cell_sums(cells, values, psi, basis.partition.size) / dataset.n
    return float(np.sqrt(np.sum(averages ** 2)))
