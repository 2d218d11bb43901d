#!usr/bin/env python
'''
excess_risk_lab/partition_basis.py

This file contains interval partitions of [0, 1], the composite
Gauss-Legendre quadrature used for every exact integral in the package,
and the localized orthonormal bases of L2(P^X) for histogram and
piecewise polynomial models.

Each basis function lives on one cell I_k = [t_k, t_{k+1}) and is stored
as a polynomial in the local variable u = (x - t_k) / Leb(I_k), which
keeps the per-cell Gram matrices well conditioned.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''
from __future__ import print_function

import itertools

import numpy as np
import scipy.linalg
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P

from excess_risk_lab.problem_model import polynomial_range

TAU_ORTH = 1e-8
MAX_DEGREE = 4


class Partition:
    '''A finite partition of [0, 1) into cells [t_k, t_{k+1}); the last
    cell is closed at 1 so that every x in [0, 1] has exactly one cell.

    Attributes:
        breakpoints (np.ndarray): 0 = t_0 < ... < t_m = 1
        size (int): the number of cells m = |P|
        lengths (np.ndarray): Lebesgue measure of each cell
    '''
    def __init__(self, breakpoints):
        breakpoints = np.array(breakpoints, dtype=float)
        if breakpoints.ndim != 1 or len(breakpoints) < 2:
            raise InvalidPartitionError('A partition needs at least one cell, got breakpoints {0}'.format(breakpoints))
        if breakpoints[0] != 0.0 or breakpoints[-1] != 1.0:
            raise InvalidPartitionError('Breakpoints must start at 0 and end at 1, got {0}'.format(list(breakpoints)))
        if np.any(np.diff(breakpoints) <= 0):
            raise InvalidPartitionError('Breakpoints must be strictly increasing, got {0}'.format(list(breakpoints)))
        breakpoints.setflags(write=False)
        self.breakpoints = breakpoints
        self.size = len(breakpoints) - 1
        self.lengths = np.diff(breakpoints)

    @classmethod
    def equal_width(cls, cells):
        if cells < 1:
            raise InvalidPartitionError('A partition needs at least one cell, got {0}'.format(cells))
        breakpoints = np.linspace(0.0, 1.0, cells + 1)
        breakpoints[-1] = 1.0
        return cls(breakpoints)

    def cell_index(self, x):
        '''Index k of the cell [t_k, t_{k+1}) containing each x.'''
        idx = np.searchsorted(self.breakpoints, x, side='right') - 1
        return np.clip(idx, 0, self.size - 1)

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.breakpoints, other.breakpoints)

    def __hash__(self):
        return hash(self.breakpoints.tobytes())


class Quadrature:
    '''Composite Gauss-Legendre rule of a fixed order on each cell of a
    partition. Cells are further split at the extra breakpoints so that
    piecewise polynomial integrands are integrated exactly up to degree
    2 * order - 1.

    Attributes:
        partition (Partition): the partition the rule is attached to
        order (int): number of Gauss-Legendre nodes per sub-interval
        nodes (np.ndarray): all nodes, grouped cell by cell
        weights (np.ndarray): matching weights (Lebesgue measure)
        cells (np.ndarray): the cell index of every node
        offsets (np.ndarray): nodes of cell k are nodes[offsets[k]:offsets[k+1]]
    '''
    def __init__(self, partition, order, extra_breakpoints=()):
        if order < 1:
            raise ValueError('Quadrature order must be positive, got {0}'.format(order))
        base_nodes, base_weights = legendre.leggauss(order)
        extra = np.asarray(extra_breakpoints, dtype=float)
        nodes = list()
        weights = list()
        cells = list()
        offsets = [0]
        for k in range(partition.size):
            a = partition.breakpoints[k]
            b = partition.breakpoints[k + 1]
            cuts = np.concatenate([[a], extra[(extra > a) & (extra < b)], [b]])
            cuts = np.unique(cuts)
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                half = 0.5 * (hi - lo)
                nodes.append(half * base_nodes + 0.5 * (hi + lo))
                weights.append(half * base_weights)
                cells.append(np.full(order, k))
            offsets.append(offsets[-1] + order * (len(cuts) - 1))
        self.partition = partition
        self.order = order
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        self.cells = np.concatenate(cells)
        self.offsets = np.array(offsets)

    @classmethod
    def for_problem(cls, partition, problem, degree):
        '''Rule exact for integrands that are polynomials of the given
        degree between consecutive breakpoints of the partition and of
        the problem's s*, sigma and f.'''
        return cls(partition, max(degree // 2 + 1, 1), extra_breakpoints=problem.breakpoints())

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def integrate_by_cell(self, values):
        return np.bincount(self.cells, weights=self.weights * values, minlength=self.partition.size)

    def cell_slice(self, k):
        return slice(self.offsets[k], self.offsets[k + 1])


class RegularityReport:
    '''Lower and upper regularity constants of a partition with respect to
    P^X and to the Lebesgue measure.

    Attributes:
        cell_masses (np.ndarray): P^X(I) for each cell
        lower_const_P (float): sqrt(|P| * min_I P^X(I))
        lower_const_leb (float): sqrt(|P| * min_I Leb(I))
        upper_const_P (float): |P| * max_I P^X(I)
    '''
    def __init__(self, cell_masses, lengths):
        m = len(cell_masses)
        self.cell_masses = np.asarray(cell_masses)
        self.lower_const_P = float(np.sqrt(m * self.cell_masses.min()))
        self.lower_const_leb = float(np.sqrt(m * np.min(lengths)))
        self.upper_const_P = float(m * self.cell_masses.max())


def regularity_report(partition, problem):
    '''Compute the regularity constants of a partition under the
    problem's design law.

    Args:
        partition (Partition): the partition
        problem (RegressionProblem): supplies the design density

    Returns:
        RegularityReport: the constants and the cell masses
    '''
    density = problem.design_density
    masses = np.array([density.mass(partition.breakpoints[k], partition.breakpoints[k + 1])
                       for k in range(partition.size)])
    return RegularityReport(masses, partition.lengths)


class OrthonormalBasis:
    '''A basis (phi_{k,j}) of a piecewise polynomial model, orthonormal in
    L2(P^X), with phi_{k,j} supported on cell k. Function phi_{k,j} has
    flat index k * (degree + 1) + j.

    Attributes:
        partition (Partition): the cells
        degree (int): maximal degree r
        coefficients (np.ndarray): shape (|P|, r + 1, r + 1);
            coefficients[k, j] are the ascending local-variable
            coefficients of phi_{k,j}
        dimension (int): D = (r + 1) * |P|
        sup_norms (np.ndarray): shape (|P|, r + 1), sup-norm of each phi
        localization_const (float): r_M(phi), the smallest constant with
            ||sum beta phi||_inf <= r_M(phi) * sqrt(D) * |beta|_inf
        leb_scaled_sup (float): max over cells of
            max_j ||phi_{k,j}||_inf * sqrt(Leb(I_k))
        problem (RegressionProblem): the problem whose design law the basis
            is orthonormal for, or None
    '''
    def __init__(self, partition, degree, coefficients, localization_const=None, problem=None):
        coefficients = np.array(coefficients, dtype=float)
        if coefficients.shape != (partition.size, degree + 1, degree + 1):
            raise ValueError('Expected coefficients of shape {0}, got {1}'.format(
                (partition.size, degree + 1, degree + 1), coefficients.shape))
        coefficients.setflags(write=False)
        self.partition = partition
        self.degree = degree
        self.problem = problem
        self.coefficients = coefficients
        self.dimension = (degree + 1) * partition.size
        self.sup_norms = np.array([[_sup_abs(c) for c in block] for block in coefficients])
        self.leb_scaled_sup = float(np.max(self.sup_norms.max(axis=1) * np.sqrt(partition.lengths)))
        if localization_const is None:
            localization_const = self._measure_localization()
        self.localization_const = float(localization_const)

    def _measure_localization(self):
        # the maximum over |beta|_inf <= 1 is reached at a sign pattern of one cell block
        worst = 0.0
        for block in self.coefficients:
            for signs in itertools.product((1.0, -1.0), repeat=self.degree):
                pattern = np.concatenate([[1.0], signs])
                worst = max(worst, _sup_abs(pattern @ block))
        return worst / np.sqrt(self.dimension)

    def with_coefficients(self, coefficients):
        '''A basis on the same partition with new per-cell coefficients.'''
        return OrthonormalBasis(self.partition, self.degree, coefficients, problem=self.problem)

    def local(self, x):
        '''Cell index and local variable u in [0, 1] of each x.'''
        x = np.atleast_1d(np.asarray(x, dtype=float))
        cells = self.partition.cell_index(x)
        u = (x - self.partition.breakpoints[cells]) / self.partition.lengths[cells]
        return cells, u

    def values(self, x):
        '''Evaluate the basis on its support.

        Args:
            x (np.ndarray): points of [0, 1]

        Returns:
            (np.ndarray, np.ndarray): the cell index of each point and
                an array V of shape (len(x), r + 1) with
                V[i, j] = phi_{cell(x_i), j}(x_i); every other basis
                function vanishes at x_i
        '''
        cells, u = self.local(x)
        powers = P.polyvander(u, self.degree)
        return cells, np.einsum('ijp,ip->ij', self.coefficients[cells], powers)

    def design_matrix(self, x):
        '''Dense matrix of all D basis functions at x, shape (len(x), D).'''
        cells, values = self.values(x)
        out = np.zeros((len(cells), self.dimension))
        width = self.degree + 1
        columns = cells[:, None] * width + np.arange(width)[None, :]
        np.put_along_axis(out, columns, values, axis=1)
        return out

    def blocks(self, beta):
        return np.asarray(beta, dtype=float).reshape(self.partition.size, self.degree + 1)

    def evaluate(self, beta, x):
        '''Values of sum_k beta_k phi_k at x.'''
        cells, values = self.values(x)
        return np.sum(values * self.blocks(beta)[cells], axis=1)

    def cell_polynomial(self, beta, k):
        '''Local-variable coefficients of sum_j beta_{k,j} phi_{k,j} on cell k.'''
        return self.blocks(beta)[k] @ self.coefficients[k]

    def sup_norm(self, beta):
        '''Exact sup-norm of sum_k beta_k phi_k, cell by cell.'''
        blocks = self.blocks(beta)
        return max(_sup_abs(blocks[k] @ self.coefficients[k]) for k in range(self.partition.size))


def _sup_abs(coeffs):
    low, high = polynomial_range(coeffs, 0.0, 1.0)
    return max(abs(low), abs(high))


def build_histogram_basis(partition, problem):
    '''Build the basis phi_I = P^X(I)^(-1/2) 1_I of piecewise constants.

    Args:
        partition (Partition): the cells
        problem (RegressionProblem): supplies the design law

    Returns:
        OrthonormalBasis: degree 0 basis with localization constant
            1 / lower_const_P
    '''
    report = regularity_report(partition, problem)
    empty = np.flatnonzero(report.cell_masses <= 0)
    if len(empty) > 0:
        raise DegeneratePartitionError('Cells {0} have zero mass under the design law'.format(empty.tolist()))
    coefficients = (report.cell_masses ** -0.5).reshape(partition.size, 1, 1)
    return OrthonormalBasis(partition, 0, coefficients, localization_const=1.0 / report.lower_const_P,
                           problem=problem)


def build_poly_basis(partition, problem, degree):
    '''Build a localized orthonormal basis of piecewise polynomials of
    degree <= r, by Cholesky factorization of the per-cell Gram matrix
    of the local monomials 1, u, ..., u^r under the weight f.

    Args:
        partition (Partition): the cells
        problem (RegressionProblem): supplies the design density
        degree (int): maximal degree r, 0 <= r <= 4

    Returns:
        OrthonormalBasis: the basis, each function with positive leading
            coefficient
    '''
    if degree < 0 or degree > MAX_DEGREE:
        raise ConditioningError('Degree {0} is outside the supported range 0..{1}'.format(degree, MAX_DEGREE))
    quadrature = Quadrature(partition, degree + 4, extra_breakpoints=problem.design_density.breakpoints)
    cells = quadrature.cells
    u = (quadrature.nodes - partition.breakpoints[cells]) / partition.lengths[cells]
    powers = P.polyvander(u, degree)
    weighted = quadrature.weights * problem.design_density(quadrature.nodes)
    identity = np.eye(degree + 1)
    coefficients = np.empty((partition.size, degree + 1, degree + 1))
    for k in range(partition.size):
        sl = quadrature.cell_slice(k)
        gram = powers[sl].T @ (weighted[sl, None] * powers[sl])
        if gram[0, 0] <= 0:
            raise DegeneratePartitionError('Cell {0} has zero mass under the design law'.format(k))
        try:
            lower = scipy.linalg.cholesky(gram, lower=True)
        except np.linalg.LinAlgError:
            raise ConditioningError('Gram matrix of cell {0} is numerically singular for degree {1}'.format(k, degree))
        if np.min(np.diag(lower)) <= np.sqrt(np.finfo(float).eps) * np.max(np.diag(lower)):
            raise ConditioningError('Gram matrix of cell {0} is numerically singular for degree {1}'.format(k, degree))
        coefficients[k] = scipy.linalg.solve_triangular(lower, identity, lower=True)
    return OrthonormalBasis(partition, degree, coefficients, problem=problem)


def unit_envelope(basis, x):
    '''Psi_M(x) = sqrt((1/D) sum_k phi_k(x)^2).'''
    _, values = basis.values(x)
    return np.sqrt(np.sum(values ** 2, axis=1) / basis.dimension)


def envelope_bounds(basis):
    '''Exact infimum and supremum of Psi_M over [0, 1].

    Psi_M^2 restricted to a cell is the polynomial sum_j phi_{k,j}^2 / D,
    so both bounds come from per-cell polynomial extrema.

    Returns:
        (float, float): inf Psi_M and sup Psi_M
    '''
    lows = list()
    highs = list()
    for block in basis.coefficients:
        squares = np.zeros(2 * basis.degree + 1)
        for c in block:
            squares = P.polyadd(squares, P.polymul(c, c))
        low, high = polynomial_range(squares, 0.0, 1.0)
        lows.append(low)
        highs.append(high)
    return float(np.sqrt(max(min(lows), 0.0) / basis.dimension)), float(np.sqrt(max(highs) / basis.dimension))


def envelope_floor(basis):
    '''min_x Psi_M(x)^2, exact per cell.'''
    return envelope_bounds(basis)[0] ** 2


def gram_residual(basis, problem):
    '''Orthonormality certificate max_{j,k} |<phi_j, phi_k> - delta_jk|,
    with inner products computed by quadrature against the full design
    matrix, so cross-cell products are checked too.'''
    quadrature = Quadrature(basis.partition, basis.degree + 4, extra_breakpoints=problem.design_density.breakpoints)
    phi = basis.design_matrix(quadrature.nodes)
    weighted = quadrature.weights * problem.design_density(quadrature.nodes)
    gram = phi.T @ (weighted[:, None] * phi)
    return float(np.max(np.abs(gram - np.eye(basis.dimension))))


class InvalidPartitionError(ValueError):
    '''An Error caused when breakpoints do not describe a partition of
    [0, 1].'''
    pass

class DegeneratePartitionError(ValueError):
    '''An Error caused when a cell has zero mass under the design law.'''
    pass

class ConditioningError(ArithmeticError):
    '''An Error caused when a per-cell Gram matrix is too ill-conditioned
    to orthonormalize at the working precision.'''
    pass
