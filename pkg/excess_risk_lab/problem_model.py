#!usr/bin/env python
'''
excess_risk_lab/problem_model.py

This file contains the ground-truth regression problem on X = [0, 1]
(target function, heteroscedastic noise level, design density, noise
shape and envelope A) and the sampler that draws i.i.d. datasets
Y = s*(X) + sigma(X) * eps from it.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''
from __future__ import print_function

import numpy as np
from numpy.polynomial import polynomial as P

NOISE_SHAPES = {
    'rademacher': 1.0,
    'uniform': np.sqrt(3.0),
}
NOISE_FAMILIES = ('constant', 'piecewise_constant', 'polynomial')
DENSITY_FAMILIES = ('uniform', 'piecewise_constant', 'polynomial')
NORMALIZATION_TOL = 1e-9
BOUND_TOL = 1e-12


def polynomial_range(coeffs, a, b):
    '''Exact minimum and maximum of a polynomial over [a, b].

    The extrema are attained either at the endpoints or at the real
    roots of the derivative lying inside the interval.

    Args:
        coeffs (array-like): ascending power coefficients
        a (float): left end of the interval
        b (float): right end of the interval

    Returns:
        (float, float): the minimum and the maximum
    '''
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), 'b')
    if len(coeffs) == 0:
        return 0.0, 0.0
    candidates = [a, b]
    if len(coeffs) > 2:
        roots = P.polyroots(P.polyder(coeffs))
        for root in roots:
            if abs(root.imag) < 1e-12 and a < root.real < b:
                candidates.append(root.real)
    values = P.polyval(np.array(candidates), coeffs)
    return float(values.min()), float(values.max())


class PiecewisePolynomial:
    '''A function on [0, 1] that is a polynomial on each piece
    [t_k, t_{k+1}) of a breakpoint list, the last piece closed at 1.

    Attributes:
        breakpoints (np.ndarray): 0 = t_0 < t_1 < ... < t_m = 1
        coefficients (list[np.ndarray]): ascending power coefficients of
            each piece, expressed in the global variable x
        degree (int): the largest degree over the pieces
    '''
    def __init__(self, breakpoints, coefficients):
        breakpoints = np.array(breakpoints, dtype=float)
        if len(breakpoints) < 2 or breakpoints[0] != 0.0 or breakpoints[-1] != 1.0:
            raise ConfigurationError('Breakpoints must start at 0 and end at 1, got {0}'.format(list(breakpoints)))
        if np.any(np.diff(breakpoints) <= 0):
            raise ConfigurationError('Breakpoints must be strictly increasing, got {0}'.format(list(breakpoints)))
        if len(coefficients) != len(breakpoints) - 1:
            raise ConfigurationError('{0} pieces need {0} coefficient lists, got {1}'.format(
                len(breakpoints) - 1, len(coefficients)))
        self.breakpoints = breakpoints
        self.coefficients = []
        for coeffs in coefficients:
            coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
            if len(coeffs) == 0 or not np.all(np.isfinite(coeffs)):
                raise ConfigurationError('Invalid polynomial coefficients {0}'.format(coeffs))
            coeffs.setflags(write=False)
            self.coefficients.append(coeffs)
        self.breakpoints.setflags(write=False)
        self.degree = max(len(c) - 1 for c in self.coefficients)

    @classmethod
    def constant(cls, value):
        return cls([0.0, 1.0], [[value]])

    @property
    def pieces(self):
        return len(self.coefficients)

    def piece_index(self, x):
        '''Index of the piece containing each x, with x = 1 in the last piece.'''
        idx = np.searchsorted(self.breakpoints, x, side='right') - 1
        return np.clip(idx, 0, self.pieces - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        idx = self.piece_index(x)
        for k, coeffs in enumerate(self.coefficients):
            mask = idx == k
            if np.any(mask):
                out[mask] = P.polyval(x[mask], coeffs)
        return out

    def range(self):
        '''Exact (min, max) of the function over [0, 1].'''
        lows, highs = zip(*[polynomial_range(c, self.breakpoints[k], self.breakpoints[k + 1])
                            for k, c in enumerate(self.coefficients)])
        return min(lows), max(highs)

    def integral(self, a=0.0, b=1.0):
        '''Exact integral of the function over [a, b].'''
        total = 0.0
        for k, coeffs in enumerate(self.coefficients):
            lo = max(a, self.breakpoints[k])
            hi = min(b, self.breakpoints[k + 1])
            if hi > lo:
                anti = P.polyint(coeffs)
                total += P.polyval(hi, anti) - P.polyval(lo, anti)
        return float(total)


class DesignDensity:
    '''The density f of the design law P^X on [0, 1], with exact CDF and
    inverse CDF for the supported families.

    Attributes:
        family (str): uniform, piecewise_constant or polynomial
        function (PiecewisePolynomial): f itself
        c_min (float): exact minimum of f
        c_max (float): exact maximum of f
    '''
    def __init__(self, family, function):
        if family not in DENSITY_FAMILIES:
            raise ConfigurationError('Unknown design density family {0}, expected one of {1}'.format(
                family, ', '.join(DENSITY_FAMILIES)))
        if function.degree > 2:
            raise ConfigurationError('Design densities of degree {0} are not supported (max 2)'.format(function.degree))
        self.family = family
        self.function = function
        self.c_min, self.c_max = function.range()
        if self.c_min <= 0:
            raise ConfigurationError('Design density must stay above c_min > 0, found minimum {0}'.format(self.c_min))
        total = function.integral()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ConfigurationError('Design density integrates to {0}, not 1'.format(total))
        anti = [P.polyint(c) for c in function.coefficients]
        masses = [P.polyval(function.breakpoints[k + 1], a) - P.polyval(function.breakpoints[k], a)
                  for k, a in enumerate(anti)]
        self._antiderivatives = anti
        self._cumulative = np.concatenate([[0.0], np.cumsum(masses)])

    @classmethod
    def from_family(cls, family, values=None, breakpoints=None):
        '''Build a density from a named family.

        Args:
            family (str): uniform | piecewise_constant | polynomial
            values (list[float]): piece heights (piecewise_constant) or
                ascending power coefficients (polynomial); unused for
                uniform
            breakpoints (list[float]): piece boundaries, piecewise_constant
                only

        Returns:
            DesignDensity: the validated density
        '''
        if family == 'uniform':
            return cls(family, PiecewisePolynomial.constant(1.0))
        if family == 'piecewise_constant':
            if values is None or breakpoints is None:
                raise ConfigurationError('piecewise_constant density needs values and breakpoints')
            return cls(family, PiecewisePolynomial(breakpoints, [[v] for v in values]))
        if family == 'polynomial':
            if values is None:
                raise ConfigurationError('polynomial density needs coefficients')
            return cls(family, PiecewisePolynomial([0.0, 1.0], [values]))
        raise ConfigurationError('Unknown design density family {0}, expected one of {1}'.format(
            family, ', '.join(DENSITY_FAMILIES)))

    @property
    def breakpoints(self):
        return self.function.breakpoints

    def __call__(self, x):
        return self.function(x)

    def mass(self, a, b):
        '''P^X([a, b)).'''
        return self.function.integral(a, b)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.function.piece_index(x)
        out = np.empty_like(x)
        for k, anti in enumerate(self._antiderivatives):
            mask = idx == k
            if np.any(mask):
                out[mask] = self._cumulative[k] + P.polyval(x[mask], anti) - P.polyval(self.breakpoints[k], anti)
        return out

    def inverse_cdf(self, u):
        '''Invert the CDF, in closed form on degree <= 1 pieces.

        Degree 2 pieces use a bracketed Newton iteration with bisection
        fallback rather than Cardano's formula; CDF(x) matches u to
        rounding.'''
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.searchsorted(self._cumulative, u, side='right') - 1, 0, self.function.pieces - 1)
        out = np.empty_like(u)
        for k, coeffs in enumerate(self.function.coefficients):
            mask = idx == k
            if not np.any(mask):
                continue
            a = self.breakpoints[k]
            b = self.breakpoints[k + 1]
            rest = u[mask] - self._cumulative[k]
            coeffs = np.trim_zeros(np.asarray(coeffs), 'b')
            if len(coeffs) <= 1:
                x = a + rest / coeffs[0]
            elif len(coeffs) == 2:
                g = P.polyval(a, coeffs)
                x = a + 2.0 * rest / (g + np.sqrt(np.maximum(g * g + 2.0 * coeffs[1] * rest, 0.0)))
            else:
                x = self._newton_inverse(k, rest, a, b)
            out[mask] = np.clip(x, a, b)
        return out

    def _newton_inverse(self, k, rest, a, b, iterations=60):
        anti = self._antiderivatives[k]
        coeffs = self.function.coefficients[k]
        base = P.polyval(a, anti)
        lo = np.full_like(rest, a)
        hi = np.full_like(rest, b)
        x = a + (b - a) * rest / max(self._cumulative[k + 1] - self._cumulative[k], 1e-300)
        for _ in range(iterations):
            gap = P.polyval(x, anti) - base - rest
            lo = np.where(gap < 0, x, lo)
            hi = np.where(gap > 0, x, hi)
            step = x - gap / P.polyval(x, coeffs)
            outside = (step <= lo) | (step >= hi)
            x = np.where(outside, 0.5 * (lo + hi), step)
        return x


def make_noise_level(family, values, breakpoints=None):
    '''Build the noise level sigma from a named family.

    Args:
        family (str): constant | piecewise_constant | polynomial
        values (list[float]): the constant, the piece values, or the
            ascending power coefficients
        breakpoints (list[float]): piece boundaries, piecewise_constant
            only

    Returns:
        PiecewisePolynomial: sigma on [0, 1]
    '''
    values = list(values)
    if family == 'constant':
        if len(values) != 1:
            raise ConfigurationError('constant noise level takes one value, got {0}'.format(values))
        return PiecewisePolynomial.constant(values[0])
    if family == 'piecewise_constant':
        if breakpoints is None:
            raise ConfigurationError('piecewise_constant noise level needs breakpoints')
        return PiecewisePolynomial(breakpoints, [[v] for v in values])
    if family == 'polynomial':
        return PiecewisePolynomial([0.0, 1.0], [values])
    raise ConfigurationError('Unknown noise level family {0}, expected one of {1}'.format(
        family, ', '.join(NOISE_FAMILIES)))


class RegressionProblem:
    '''The data model Y = s*(X) + sigma(X) * eps with X ~ f on [0, 1],
    eps centered with unit variance and bounded support.

    Attributes:
        target (PiecewisePolynomial): the regression function s*
        noise_level (PiecewisePolynomial): sigma
        design_density (DesignDensity): f
        noise_shape (str): rademacher or uniform (on [-sqrt 3, sqrt 3])
        bound_A (float): envelope with |Y| <= A almost surely
        claim_h2 (bool): whether sigma is claimed bounded away from 0
        sigma_min, sigma_max (float): exact bounds of sigma
        c_min, c_max (float): exact bounds of f
        sup_target (float): the sup-norm of s*
    '''
    def __init__(self, target, noise_level, design_density, noise_shape='rademacher',
                 bound_A=1.0, claim_h2=False):
        if noise_shape not in NOISE_SHAPES:
            raise ConfigurationError('Unknown noise shape {0}, expected one of {1}'.format(
                noise_shape, ', '.join(sorted(NOISE_SHAPES))))
        if not bound_A > 0:
            raise ConfigurationError('bound_A must be positive, got {0}'.format(bound_A))
        self.target = target
        self.noise_level = noise_level
        self.design_density = design_density
        self.noise_shape = noise_shape
        self.bound_A = float(bound_A)
        self.claim_h2 = claim_h2
        self.sigma_min, self.sigma_max = noise_level.range()
        if self.sigma_min < 0:
            raise ConfigurationError('Noise level must be nonnegative, found minimum {0}'.format(self.sigma_min))
        if claim_h2 and self.sigma_min <= 0:
            raise ConfigurationError('(H2) claimed but the noise level reaches {0}'.format(self.sigma_min))
        low, high = target.range()
        self.sup_target = max(abs(low), abs(high))
        envelope = self.sup_target + self.sigma_max * self.noise_radius
        if envelope > self.bound_A * (1 + BOUND_TOL):
            raise ConfigurationError('|s*| + sigma_max * radius = {0} exceeds bound_A = {1}'.format(
                envelope, self.bound_A))

    @property
    def noise_radius(self):
        return NOISE_SHAPES[self.noise_shape]

    @property
    def c_min(self):
        return self.design_density.c_min

    @property
    def c_max(self):
        return self.design_density.c_max

    def breakpoints(self):
        '''Union of the breakpoints of s*, sigma and f: every function of
        the problem is a polynomial between two consecutive entries.'''
        return np.union1d(np.union1d(self.target.breakpoints, self.noise_level.breakpoints),
                          self.design_density.breakpoints)

    def draw_noise(self, rng, n):
        if self.noise_shape == 'rademacher':
            return 2.0 * rng.integers(0, 2, size=n) - 1.0
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=n)


class Dataset:
    '''An ordered sample (x_i, y_i), i = 1..n.

    Attributes:
        x (np.ndarray): design points in [0, 1)
        y (np.ndarray): responses
        seed (int or None): the seed the sample was drawn with
        n (int): sample size
    '''
    def __init__(self, x, y, seed=None, bound_A=None):
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise InvalidDatasetError('x and y must be 1-d of equal length, got {0} and {1}'.format(x.shape, y.shape))
        if np.any((x < 0) | (x > 1)):
            raise InvalidDatasetError('Design points must lie in [0, 1]')
        if bound_A is not None and np.any(np.abs(y) > bound_A * (1 + BOUND_TOL)):
            raise InvalidDatasetError('Responses exceed the envelope bound_A = {0}'.format(bound_A))
        x.setflags(write=False)
        y.setflags(write=False)
        self.x = x
        self.y = y
        self.seed = seed
        self.n = len(x)

    @property
    def points(self):
        return list(zip(self.x.tolist(), self.y.tolist()))

    def __len__(self):
        return self.n


def sample_dataset(problem, n, seed):
    '''Draw n i.i.d. observations from the problem.

    X is drawn by inverse CDF from uniform draws in [0, 1), then eps from
    the noise shape. The result depends only on (problem, n, seed).

    Args:
        problem (RegressionProblem): the ground truth
        n (int): the sample size, n >= 0
        seed (int): the generator seed

    Returns:
        Dataset: the sample
    '''
    if n < 0:
        raise InvalidDatasetError('Sample size must be nonnegative, got {0}'.format(n))
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    x = problem.design_density.inverse_cdf(u)
    x = np.minimum(x, np.nextafter(1.0, 0.0))
    eps = problem.draw_noise(rng, n)
    y = problem.target(x) + problem.noise_level(x) * eps
    return Dataset(x, y, seed=seed, bound_A=problem.bound_A)


class ConfigurationError(ValueError):
    '''An Error caused when a problem family is given invalid parameters
    or the problem violates its declared bounds.'''
    pass

class InvalidDatasetError(ValueError):
    '''An Error caused when a dataset is malformed.'''
    pass
