#!usr/bin/env python
'''
excess_risk_lab/estimator.py

This file contains the L2(P^X) projection s_M of the target onto a
partition model and the least-squares estimator s_n computed from a
dataset, both in the coordinates of an orthonormal basis.

The estimator solves (Id + L_{n,D}) beta = X_{y,n} with
(L_{n,D})_{jk} = (P_n - P)(phi_j phi_k) and X_{y,n}[k] = P_n(y phi_k).
Basis functions of distinct cells have disjoint supports, so the system
splits into one (r + 1) x (r + 1) system per cell.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''
from __future__ import print_function

import numpy as np
import scipy.linalg

from excess_risk_lab.partition_basis import Quadrature

DEGENERACY_THRESHOLD = 0.9


def cell_sums(cells, values, weights, size):
    '''Per-cell sums of weights * values[:, j] for every column j.

    Returns:
        np.ndarray: shape (size, values.shape[1])
    '''
    return np.stack([np.bincount(cells, weights=weights * values[:, j], minlength=size)
                     for j in range(values.shape[1])], axis=1)


def project_target(problem, basis):
    '''Coordinates of the projection s_M of s* onto the model, computed
    as beta_M[k] = int s* phi_k f by exact quadrature.

    Args:
        problem (RegressionProblem): the ground truth
        basis (OrthonormalBasis): orthonormal for the problem's P^X

    Returns:
        np.ndarray: the D coordinates beta_M
    '''
    degree = problem.target.degree + basis.degree + problem.design_density.function.degree
    quadrature = Quadrature.for_problem(basis.partition, problem, degree)
    cells, values = basis.values(quadrature.nodes)
    weights = quadrature.weights * problem.design_density(quadrature.nodes) * problem.target(quadrature.nodes)
    return cell_sums(cells, values, weights, basis.partition.size).ravel()


class FitResult:
    '''Coordinates of s_M and s_n in a basis, with degeneracy bookkeeping.

    Attributes:
        coeff_projection (np.ndarray): beta_M
        coeff_estimator (np.ndarray): beta^(n); on imputed cells it equals
            beta_M
        degenerate (bool): the fit left the conditioning event, either a
            cell is empty, a cell system is singular, or cond_estimate
            exceeds the threshold
        empty_cells (list[int]): cells without sample points
        singular_cells (list[int]): nonempty cells whose system could not
            be solved
        cond_estimate (float): ||L_{n,D}||, the max absolute row sum of
            the empirical Gram perturbation
        n (int): the sample size
    '''
    def __init__(self, coeff_projection, coeff_estimator, empty_cells=(), singular_cells=(),
                 cond_estimate=0.0, n=0, threshold=DEGENERACY_THRESHOLD):
        self.coeff_projection = np.asarray(coeff_projection, dtype=float)
        self.coeff_estimator = np.asarray(coeff_estimator, dtype=float)
        self.empty_cells = list(empty_cells)
        self.singular_cells = list(singular_cells)
        self.cond_estimate = float(cond_estimate)
        self.n = n
        self.threshold = threshold
        self.degenerate = bool(self.empty_cells or self.singular_cells or self.cond_estimate > threshold)

    @property
    def imputed_cells(self):
        return sorted(self.empty_cells + self.singular_cells)

    @property
    def difference(self):
        return self.coeff_estimator - self.coeff_projection


class LeastSquaresEstimator:
    '''Computes least-squares fits on one model, imputing the projection
    coordinates on cells where the empirical system is unusable.

    Attributes:
        basis (OrthonormalBasis): the model's basis
        coeff_projection (np.ndarray): beta_M, projected from the problem
            the basis was built for when not supplied
        threshold (float): ||L_{n,D}|| level above which a fit is
            flagged degenerate
    '''
    def __init__(self, basis, coeff_projection=None, threshold=DEGENERACY_THRESHOLD):
        self.basis = basis
        if coeff_projection is None:
            if basis.problem is None:
                raise MissingProjectionError('A basis without a problem needs explicit projection coordinates')
            coeff_projection = project_target(basis.problem, basis)
        self.coeff_projection = np.asarray(coeff_projection, dtype=float)
        if self.coeff_projection.shape != (basis.dimension,):
            raise MissingProjectionError('Expected {0} projection coordinates, got shape {1}'.format(
                basis.dimension, self.coeff_projection.shape))
        self.threshold = threshold

    def fit(self, dataset):
        '''Fit s_n on a dataset.

        Args:
            dataset (Dataset): a nonempty sample

        Returns:
            FitResult: the fitted coordinates
        '''
        if dataset.n == 0:
            raise EmptyDatasetError('Cannot fit a least-squares estimator on an empty dataset')
        basis = self.basis
        size = basis.partition.size
        width = basis.degree + 1
        n = dataset.n
        cells, values = basis.values(dataset.x)
        counts = np.bincount(cells, minlength=size)
        gram = np.empty((size, width, width))
        for j in range(width):
            for l in range(j, width):
                gram[:, j, l] = np.bincount(cells, weights=values[:, j] * values[:, l], minlength=size) / n
                gram[:, l, j] = gram[:, j, l]
        rhs = cell_sums(cells, values, dataset.y, size) / n
        perturbation = gram - np.eye(width)
        cond_estimate = np.abs(perturbation).sum(axis=2).max()

        projection = basis.blocks(self.coeff_projection)
        beta = projection.copy()
        empty_cells = np.flatnonzero(counts == 0).tolist()
        singular_cells = list()
        y_sums = np.bincount(cells, weights=dataset.y, minlength=size)
        for k in np.flatnonzero(counts > 0):
            if width == 1:
                # regressogram: the cell mean divided by the height of phi_I
                beta[k, 0] = y_sums[k] / counts[k] / basis.coefficients[k, 0, 0]
                continue
            if counts[k] < width:
                singular_cells.append(int(k))
                continue
            try:
                factor = scipy.linalg.cho_factor(gram[k], lower=True)
                beta[k] = scipy.linalg.cho_solve(factor, rhs[k])
            except np.linalg.LinAlgError:
                singular_cells.append(int(k))
        return FitResult(self.coeff_projection, beta.ravel(), empty_cells, singular_cells,
                         cond_estimate, n=n, threshold=self.threshold)


def fit_least_squares(dataset, basis, coeff_projection=None, threshold=DEGENERACY_THRESHOLD):
    '''Least-squares estimator s_n on the model spanned by basis.

    Args:
        dataset (Dataset): nonempty sample
        basis (OrthonormalBasis): the model's basis
        coeff_projection (np.ndarray) [optional]: beta_M, imputed on empty
            or singular cells. Default: the projection of the target of
            the problem the basis was built for
        threshold (float) [optional]: degeneracy level of ||L_{n,D}||.
            Default: 0.9

    Returns:
        FitResult: coordinates of s_M and s_n
    '''
    return LeastSquaresEstimator(basis, coeff_projection, threshold).fit(dataset)


def sup_norm_distance(fit, basis):
    '''||s_n - s_M||_inf, exact through per-cell polynomial extrema.'''
    return basis.sup_norm(fit.difference)


class EmptyDatasetError(ValueError):
    '''An Error caused when a least-squares fit is requested on an empty
    dataset.'''
    pass

class MissingProjectionError(ValueError):
    '''An Error caused when the projection coordinates beta_M are neither
    supplied nor computable from the basis.'''
    pass
