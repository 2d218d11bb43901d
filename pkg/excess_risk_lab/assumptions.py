#!usr/bin/env python
'''
excess_risk_lab/assumptions.py

This file contains checks of the structural assumptions under which the
excess-risk bounds hold, evaluated exactly on a (problem, model) pair:

    H1      |Y| <= A almost surely and ||s_M||_inf <= A
    H2      sigma >= sigma_min > 0
    H2bis   K_{1,M} >= A_min > 0
    H3      sup Psi_M = A_{3,M} < infinity
    H4      a localized orthonormal basis with constant r_M(phi)

Sup-norm consistency of s_n (H5) is a property of the estimator's law,
certified by experiment.check_sup_norm_rate instead.

Licensed under the GNU Affero General Public License v3 or later, see
https://www.gnu.org/licenses/agpl-3.0.en.html
'''
from __future__ import print_function

import numpy as np

from excess_risk_lab.estimator import project_target
from excess_risk_lab.partition_basis import Quadrature, envelope_bounds, regularity_report
from excess_risk_lab.risk_metrics import complexity_K1M

ASSUMPTIONS = ('H1', 'H2', 'H2bis', 'H3', 'H4')


class AssumptionReport:
    '''Outcome of the assumption checks.

    Attributes:
        sup_projection (float): ||s_M||_inf
        sigma_min (float): the noise floor
        sigma_l2 (float): ||sigma||_2 under P^X
        K1M (float): K_{1,M}
        a_min (float): the lower bound used for H2bis; 2 sigma_min when
            H2 holds, 2 inf Psi_M ||sigma||_2 otherwise
        envelope_inf (float): inf Psi_M
        envelope_sup (float): sup Psi_M, the H3 constant A_{3,M}
        localization_const (float): r_M(phi), the H4 constant
        regularity (RegularityReport): the partition constants
        results (dict[str:bool]): verdict per assumption
    '''
    def __init__(self, problem, basis, sup_projection, sigma_l2, K1M, envelope_inf, envelope_sup,
                 regularity, tol=1e-12):
        self.sup_projection = sup_projection
        self.sigma_min = problem.sigma_min
        self.sigma_l2 = sigma_l2
        self.K1M = K1M
        self.envelope_inf = envelope_inf
        self.envelope_sup = envelope_sup
        self.localization_const = basis.localization_const
        self.regularity = regularity
        if problem.sigma_min > 0:
            self.a_min = 2.0 * problem.sigma_min
        else:
            self.a_min = 2.0 * envelope_inf * sigma_l2
        self.results = {
            'H1': sup_projection <= problem.bound_A * (1 + tol),
            'H2': problem.sigma_min > 0,
            'H2bis': self.a_min > 0 and K1M >= self.a_min * (1 - tol),
            'H3': bool(np.isfinite(envelope_sup)),
            'H4': bool(np.isfinite(basis.localization_const)),
        }

    def holds(self, name):
        return self.results[name]

    def require(self, names):
        '''Raise AssumptionError unless every named assumption holds.'''
        failed = [name for name in names if not self.results[name]]
        if failed:
            raise AssumptionError('Assumptions {0} do not hold (sigma_min={1}, A_min={2}, K_1M={3})'.format(
                ', '.join(failed), self.sigma_min, self.a_min, self.K1M))

    def summary(self):
        '''Lines describing the verdicts, for console output.'''
        ret = list()
        for name in ASSUMPTIONS:
            ret.append('{0}\t{1}\n'.format(name, 'holds' if self.results[name] else 'FAILS'))
        ret.append('A_3M\t{0:.6g}\n'.format(self.envelope_sup))
        ret.append('r_M\t{0:.6g}\n'.format(self.localization_const))
        ret.append('A_min\t{0:.6g}\n'.format(self.a_min))
        return ret


def check_assumptions(problem, basis, coeff_projection=None):
    '''Evaluate H1, H2, H2bis, H3 and H4 for a problem and a model.

    Args:
        problem (RegressionProblem): the ground truth
        basis (OrthonormalBasis): the model's basis
        coeff_projection (np.ndarray) [optional]: beta_M

    Returns:
        AssumptionReport: the verdicts and constants
    '''
    if coeff_projection is None:
        coeff_projection = project_target(problem, basis)
    quadrature = Quadrature.for_problem(basis.partition, problem,
                                        2 * problem.noise_level.degree + problem.design_density.function.degree)
    sigma_l2 = np.sqrt(quadrature.integrate(problem.noise_level(quadrature.nodes) ** 2
                                            * problem.design_density(quadrature.nodes)))
    K1M = np.sqrt(complexity_K1M(problem, basis, coeff_projection=coeff_projection).K1M_sq)
    envelope_inf, envelope_sup = envelope_bounds(basis)
    return AssumptionReport(problem, basis, basis.sup_norm(coeff_projection), float(sigma_l2), float(K1M),
                            envelope_inf, envelope_sup, regularity_report(basis.partition, problem))


class AssumptionError(ValueError):
    '''An Error caused when an assumption claimed for an experiment does
    not hold for its problem and model.'''
    pass
