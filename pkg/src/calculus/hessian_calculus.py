"""
hessian calculus module
jacobian dI/dF with log-aware richardson differencing, the frequency map
Gamma = dH/dI, its derivative dGamma/dF, and the action-space hessian
determinant det(dGamma/dF) / det(dI/dF)
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from actions.action_map import ActionMapper, synthetic_action_gradient, synthetic_action_hessian
from catalog.model_catalog import MomentumPoint
from common.config import load_settings
from common.errors import DomainError, SingularJacobianError, StepError

logger = logging.getLogger(__name__)

_MAX_SHRINKS = 3
_CHART_NEWTON_ITER = 30


@dataclass
class ActionChartSample:
    """everything computed at one regular point"""

    F: MomentumPoint
    I: object
    J: np.ndarray
    detJ: float
    Gamma: np.ndarray
    dGamma_dF: np.ndarray
    detHess: float
    J_error: np.ndarray = None
    dGamma_error: np.ndarray = None
    method: str = 'differenced'

    def to_record(self):
        """flat record, fixed key order: F, I, detJ, Gamma, detHess, J, dGamma_dF"""
        n = len(self.F)
        record = {}
        for j in range(n):
            record[f'F{j + 1}'] = float(self.F[j])
        for j in range(n):
            record[f'I{j + 1}'] = float(self.I[j])
        record['detJ'] = float(self.detJ)
        for j in range(n):
            record[f'Gamma{j + 1}'] = float(self.Gamma[j])
        record['detHess'] = float(self.detHess)
        for a in range(n):
            for b in range(n):
                record[f'J_{a + 1}_{b + 1}'] = float(self.J[a, b])
        for a in range(n):
            for b in range(n):
                record[f'dGamma_{a + 1}_{b + 1}'] = float(self.dGamma_dF[a, b])
        record['method'] = self.method
        return record


def lu_determinant(lu_piv):
    """determinant from a scipy lu_factor result"""
    lu, piv = lu_piv
    swaps = int(np.sum(piv != np.arange(len(piv))))
    return float(np.prod(np.diag(lu)) * (-1.0) ** swaps)


def richardson(central, h):
    """
    one richardson step on a central difference

    args:
        central: callable(h) -> central difference estimate (scalar or array)
        h: base step

    returns:
        (estimate, error estimate)
    """
    coarse = np.asarray(central(h), dtype=float)
    fine = np.asarray(central(0.5 * h), dtype=float)
    delta = (fine - coarse) / 3.0
    return fine + delta, np.abs(delta)


def symmetry_defect(matrix):
    """norm of the antisymmetric part relative to the symmetric part"""
    sym = 0.5 * (matrix + matrix.T)
    anti = 0.5 * (matrix - matrix.T)
    denom = np.linalg.norm(sym)
    return float(np.linalg.norm(anti) / denom) if denom > 0 else float(np.linalg.norm(anti))


class HessianCalculator:
    """differential calculus of the action chart of one model"""

    def __init__(self, model, settings=None, mapper=None):
        """
        args:
            model: SystemModel
            settings: Settings instance
            mapper: ActionMapper to share its action cache
        """
        self.model = model
        self.settings = settings or load_settings()
        self.mapper = mapper or ActionMapper(model, self.settings)

    # points and stencils

    def _require_regular(self, F):
        point = MomentumPoint.of(F)
        status = point.classify(self.model)
        if status != 'regular':
            raise DomainError(f"{point.values} is not a regular point of the corner ({status})")
        for j in self.model.singular_indices:
            if point[j] < self.settings.f_floor:
                raise DomainError(
                    f"F{j + 1} = {point[j]:.3e} is below f_floor = {self.settings.f_floor:.1e}"
                )
        return point

    def _admissible(self, F):
        return MomentumPoint.of(F).classify(self.model) == 'regular'

    def _shifted(self, F, j, delta, log_step):
        out = list(F)
        out[j] = F[j] * math.exp(delta) if log_step else F[j] + delta
        return out

    def _differentiate(self, func, F, j):
        """
        d func / dF_j by richardson-extrapolated central differences, in
        u = ln F_j for singular columns and in F_j for smooth ones

        returns:
            (derivative, error estimate)
        """
        log_step = j >= self.model.m
        h = self.settings.h_u if log_step else self.settings.h_rel * max(1.0, abs(F[j]))

        for attempt in range(_MAX_SHRINKS + 1):
            stencil = [self._shifted(F, j, s * h, log_step) for s in (-1.0, -0.5, 0.5, 1.0)]
            if all(self._admissible(p) for p in stencil):
                break
            logger.debug("stencil for column %d leaves the corner, shrinking step %g", j, h)
            h *= 0.5
        else:
            raise StepError(f"difference stencil for F{j + 1} leaves the corner after {_MAX_SHRINKS} shrinks")

        def central(step):
            plus = np.asarray(func(self._shifted(F, j, step, log_step)), dtype=float)
            minus = np.asarray(func(self._shifted(F, j, -step, log_step)), dtype=float)
            return (plus - minus) / (2.0 * step)

        value, error = richardson(central, h)
        if log_step:
            value, error = value / F[j], error / F[j]
        return value, error

    # jacobian of the action map

    def _jacobian(self, F):
        model = self.model
        n = model.n
        J = np.eye(n)
        E = np.zeros((n, n))

        for i, factor in enumerate(model.factors):
            r = model.coordinate(i)
            J[r, r] = 0.0
            if self.settings.closed_form:
                if factor.is_synthetic:
                    J[r, :] = synthetic_action_gradient(factor, F, r)
                else:
                    # a geometric action depends on its own coordinate only, with slope the period
                    J[r, r] = self.mapper.singular_action_slope(i, F[r])
                    E[r, r] = abs(factor.affine[0]) * self.settings.quad_tol
                continue

            action = lambda x, i=i: self.mapper.singular_action(i, x)
            if factor.is_synthetic:
                columns = range(n)
            else:
                # a geometric action depends on its own coordinate only
                columns = [r]
            for j in columns:
                J[r, j], E[r, j] = self._differentiate(action, F, j)
        return J, E

    def jacobian_I_wrt_F(self, F):
        """
        n x n matrix dI_i/dF_j at a regular point

        args:
            F: MomentumPoint or sequence

        returns:
            numpy array; center rows are identity rows
        """
        point = self._require_regular(F)
        return self._jacobian(list(point.values))[0]

    # frequency map

    def _factor_transpose(self, J):
        lu_piv = lu_factor(J.T)
        det = lu_determinant(lu_piv)
        if abs(det) <= self.settings.tol_nonzero:
            raise SingularJacobianError(f"|det dI/dF| = {abs(det):.3e} <= tol_nonzero")
        return lu_piv, det

    def frequency_map(self, F, J):
        """
        Gamma with Gamma J = grad_F H, solved by pivoted LU

        args:
            F: point
            J: dI/dF at F

        returns:
            numpy array of n frequencies
        """
        lu_piv, _ = self._factor_transpose(np.asarray(J, dtype=float))
        grad = self.model.hamiltonian.gradient(list(MomentumPoint.of(F).values))
        return lu_solve(lu_piv, grad)

    def gamma_at(self, F):
        F = list(F)
        return self.frequency_map(F, self._jacobian(F)[0])

    # derivative of the frequency map

    def _dgamma_exact(self, F, J, Gamma):
        """
        J^-T (d grad H/dF_s - (dJ/dF_s)^T Gamma) for every s, with exact
        second derivatives of H and of the synthetic actions; a geometric
        action contributes d(period)/dF_r on its diagonal, differenced once

        returns:
            (matrix, error estimate, method)
        """
        model = self.model
        n = model.n
        M = np.array(model.hamiltonian.hessian(F), dtype=float)
        K_err = np.zeros((n, n))
        for i, factor in enumerate(model.factors):
            r = model.coordinate(i)
            if factor.is_synthetic:
                M = M - Gamma[r] * synthetic_action_hessian(factor, F, r)
                continue
            slope = lambda x, i=i, r=r: self.mapper.singular_action_slope(i, x[r])
            curvature, error = self._differentiate(slope, F, r)
            M[r, r] -= Gamma[r] * curvature
            K_err[r, r] = abs(Gamma[r]) * error
        lu_piv, _ = self._factor_transpose(J)
        method = 'closed-form' if all(f.is_synthetic for f in model.factors) else 'period'
        return lu_solve(lu_piv, M), np.abs(lu_solve(lu_piv, K_err)), method

    def _dgamma(self, F, J, Gamma):
        if self.settings.closed_form:
            return self._dgamma_exact(F, J, Gamma)

        n = self.model.n
        D = np.zeros((n, n))
        E = np.zeros((n, n))
        for s in range(n):
            D[:, s], E[:, s] = self._differentiate(self.gamma_at, F, s)
        return D, E, 'differenced'

    def jacobian_Gamma_wrt_F(self, F):
        """
        n x n matrix dGamma_i/dF_s at a regular point

        args:
            F: MomentumPoint or sequence

        returns:
            numpy array
        """
        point = self._require_regular(F)
        F = list(point.values)
        J = self._jacobian(F)[0]
        return self._dgamma(F, J, self.frequency_map(F, J))[0]

    def det_hessian(self, F):
        """
        full ActionChartSample with detHess = det(dGamma/dF) / det(dI/dF)

        args:
            F: MomentumPoint or sequence

        returns:
            ActionChartSample
        """
        point = self._require_regular(F)
        F = list(point.values)

        J, J_err = self._jacobian(F)
        _, detJ = self._factor_transpose(J)
        Gamma = self.frequency_map(F, J)
        dG, dG_err, method = self._dgamma(F, J, Gamma)
        det_dG = lu_determinant(lu_factor(dG))

        sample = ActionChartSample(
            F=point,
            I=self.mapper.action_at(point),
            J=J,
            detJ=detJ,
            Gamma=Gamma,
            dGamma_dF=dG,
            detHess=det_dG / detJ,
            J_error=J_err,
            dGamma_error=dG_err,
            method=method,
        )
        logger.debug("det_hessian at %s: detJ=%.6g detHess=%.6g (%s)", point.values, detJ, sample.detHess, method)
        return sample

    def action_hessian(self, F):
        """dGamma/dI from the chain rule, dGamma/dF J^-1"""
        point = self._require_regular(F)
        F = list(point.values)
        J = self._jacobian(F)[0]
        dG = self._dgamma(F, J, self.frequency_map(F, J))[0]
        return np.linalg.solve(J.T, dG.T).T

    # direct differencing in the action chart

    def _chart_inverse(self, F0, J0, target):
        """
        point F with I(F) = target, by chord newton from F0; singular
        coordinates are updated in u = ln F
        """
        model = self.model
        F = list(F0)
        lu_piv = lu_factor(J0)
        for _ in range(_CHART_NEWTON_ITER):
            current = np.array(F[:model.m] + [self.mapper.singular_action(i, F) for i in range(model.k)])
            residual = current - target
            scale = max(1.0, float(np.abs(target).max()))
            if np.abs(residual).max() <= 1e-15 * scale:
                return F
            step = lu_solve(lu_piv, residual)
            for j in range(model.n):
                if j >= model.m:
                    F[j] = F[j] * math.exp(-step[j] / F[j])
                else:
                    F[j] = F[j] - step[j]
        return F

    def hessian_in_actions(self, F):
        """
        dGamma_i/dI_j by differencing Gamma along action directions through
        the inverse chart F(I)

        args:
            F: base point

        returns:
            (matrix, error estimate)
        """
        point = self._require_regular(F)
        F0 = list(point.values)
        J0 = self._jacobian(F0)[0]
        I0 = np.array(self.mapper.action_at(point).values)
        n = self.model.n

        H = np.zeros((n, n))
        E = np.zeros((n, n))
        for j in range(n):
            if j >= self.model.m:
                h = self.settings.h_u * abs(F0[j] * J0[j, j])
            else:
                h = self.settings.h_rel * max(1.0, abs(I0[j]))

            def gamma_shifted(delta, j=j):
                target = I0.copy()
                target[j] += delta
                F = self._chart_inverse(F0, J0, target)
                if not self._admissible(F):
                    raise StepError(f"action step along I{j + 1} leaves the corner")
                return self.gamma_at(F)

            central = lambda step: (gamma_shifted(step) - gamma_shifted(-step)) / (2.0 * step)
            H[:, j], E[:, j] = richardson(central, h)
        return H, E
