"""
action map module
evaluates I(F) on the corner (exact center block, loop areas or closed-form
profiles for the singular block), its boundary extension, and the
psi F ln F + phi decomposition of the singular actions
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from catalog.model_catalog import MomentumPoint
from common.config import load_settings
from common.errors import DomainError, FitError
from common.workers import map_ordered
from geometry.phase_plane import loop_action_integral, period_integral, separatrix_area

logger = logging.getLogger(__name__)

DEFAULT_GRID = {'f_min': 1e-6, 'f_max': 1e-2, 'per_decade': 20, 'box': None, 'box_points': 3, 'anchor': None}


@dataclass(frozen=True)
class ActionValue:
    """(I_1, ..., I_n) at one point"""

    values: tuple
    source: str

    def as_array(self):
        return np.array(self.values, dtype=float)

    def __getitem__(self, idx):
        return self.values[idx]

    def __len__(self):
        return len(self.values)


@dataclass
class SingularActionFit:
    """least-squares decomposition I = psi F ln F + phi of one singular action"""

    factor_index: int
    psi0: float
    psi_coeffs: dict
    phi_coeffs: dict
    max_residual: float
    grid: dict
    psi0_stderr: float = 0.0
    condition_number: float = 0.0
    anchor: list = field(default_factory=list)

    def to_record(self):
        return {
            'factor_index': self.factor_index,
            'psi0': self.psi0,
            'psi0_stderr': self.psi0_stderr,
            'psi_coeffs': self.psi_coeffs,
            'phi_coeffs': self.phi_coeffs,
            'max_residual': self.max_residual,
            'condition_number': self.condition_number,
            'anchor': self.anchor,
            'grid': self.grid,
        }


def _xlogx(x):
    return x * math.log(x) if x > 0 else 0.0


def synthetic_action(factor, F, r):
    """a (psi(F) F_r ln F_r + phi(F)) + b for a synthetic-profile factor"""
    a, b = factor.affine
    return a * (factor.psi(F) * _xlogx(F[r]) + factor.phi(F)) + b


def synthetic_action_gradient(factor, F, r):
    """exact gradient of synthetic_action in all n coordinates"""
    a = factor.affine[0]
    x = F[r]
    grad = np.array(factor.psi.gradient(F), dtype=float) * _xlogx(x)
    grad += np.array(factor.phi.gradient(F), dtype=float)
    grad[r] += factor.psi(F) * (math.log(x) + 1.0)
    return a * grad


def synthetic_action_hessian(factor, F, r):
    """exact hessian of synthetic_action in all n coordinates"""
    a = factor.affine[0]
    x = F[r]
    log1 = math.log(x) + 1.0
    dpsi = np.array(factor.psi.gradient(F), dtype=float)

    hess = np.array(factor.psi.hessian(F), dtype=float) * _xlogx(x)
    hess += np.array(factor.phi.hessian(F), dtype=float)
    hess[:, r] += dpsi * log1
    hess[r, :] += dpsi * log1
    hess[r, r] += factor.psi(F) / x
    return a * hess


def _monomials(variables, degree, nvars):
    """exponent tuples of total degree <= degree in the given variables"""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(variables, total):
            exps = [0] * nvars
            for v in combo:
                exps[v] += 1
            out.append(tuple(exps))
    return out


def _key(exps):
    return ','.join(str(e) for e in exps)


class ActionMapper:
    """action coordinates of one SystemModel"""

    def __init__(self, model, settings=None):
        """
        args:
            model: SystemModel
            settings: Settings instance, defaults loaded from config/config.yaml
        """
        self.model = model
        self.settings = settings or load_settings()
        self._loop = lru_cache(maxsize=8192)(self._loop_uncached)
        self._period = lru_cache(maxsize=8192)(self._period_uncached)

    def _loop_uncached(self, i, F_r):
        factor = self.model.factors[i]
        return loop_action_integral(factor, factor.native_level(F_r), self.settings)

    def _period_uncached(self, i, F_r):
        factor = self.model.factors[i]
        return period_integral(factor, factor.native_level(F_r), self.settings)

    def singular_action(self, i, F):
        """
        I_{n-k+i}(F) for factor i (0-based) at a full coordinate vector

        args:
            i: factor index
            F: sequence of n coordinates with F_r > 0

        returns:
            float
        """
        factor = self.model.factors[i]
        r = self.model.coordinate(i)
        if factor.is_synthetic:
            return synthetic_action(factor, list(F), r)
        a, b = factor.affine
        return a * self._loop(i, float(F[r])) + b

    def singular_action_slope(self, i, F_r):
        """dI/dF_r of a geometric factor, sigma * a * period"""
        factor = self.model.factors[i]
        if factor.is_synthetic:
            raise DomainError("slope by period is only defined for geometric factors")
        return factor.momentum_sign * factor.affine[0] * self._period(i, float(F_r))

    def action_at(self, F):
        """
        full action vector at a regular point

        args:
            F: MomentumPoint or sequence

        returns:
            ActionValue
        """
        point = MomentumPoint.of(F)
        status = point.classify(self.model)
        if status == 'boundary':
            raise DomainError(f"{point.values} lies on the boundary of the corner, use continuity_extension")
        if status != 'regular':
            raise DomainError(f"{point.values} is outside the corner")

        values = list(point.values[:self.model.m])
        values += [self.singular_action(i, point.values) for i in range(self.model.k)]
        return ActionValue(tuple(values), self._source())

    def continuity_extension(self, F_boundary):
        """
        boundary values of I: F ln F -> 0 for synthetic factors, separatrix
        areas for geometric ones

        args:
            F_boundary: point with at least one singular coordinate equal to 0

        returns:
            ActionValue
        """
        point = MomentumPoint.of(F_boundary)
        status = point.classify(self.model)
        if status == 'regular':
            raise DomainError(f"{point.values} is a regular point, use action_at")
        if status == 'outside':
            raise DomainError(f"{point.values} is outside the corner")

        F = list(point.values)
        values = F[:self.model.m]
        for i, factor in enumerate(self.model.factors):
            r = self.model.coordinate(i)
            if F[r] > 0:
                values.append(self.singular_action(i, F))
            elif factor.is_synthetic:
                a, b = factor.affine
                values.append(a * factor.phi(F) + b)
            else:
                a, b = factor.affine
                values.append(a * separatrix_area(factor, self.settings) + b)
        return ActionValue(tuple(values), self._source())

    def _source(self):
        kinds = {f.is_synthetic for f in self.model.factors}
        if kinds == {True}:
            return 'synthetic'
        if kinds == {False}:
            return 'geometric'
        return 'mixed'

    def _grid_points(self, i, grid):
        """tensor grid: log-spaced singular coordinate times linear boxes elsewhere"""
        model = self.model
        r = model.coordinate(i)
        f_min, f_max = float(grid['f_min']), float(grid['f_max'])
        if not (0 < f_min < f_max):
            raise DomainError(f"fit grid needs 0 < f_min < f_max, got [{f_min}, {f_max}]")
        limit = model.factors[i].momentum_limit()
        if limit is not None and f_max >= limit:
            raise DomainError(f"fit grid upper end {f_max} reaches the factor limit {limit}")

        decades = math.log10(f_max / f_min)
        count = max(2, int(math.ceil(decades * grid['per_decade'])) + 1)
        singular = np.logspace(math.log10(f_min), math.log10(f_max), count)

        anchor = grid.get('anchor')
        box = grid.get('box')
        axes = []
        for j in range(model.n):
            if j == r:
                axes.append(singular)
            elif box is not None and box[j] is not None and box[j][0] < box[j][1]:
                axes.append(np.linspace(box[j][0], box[j][1], grid['box_points']))
            elif anchor is not None:
                axes.append(np.array([float(anchor[j])]))
            elif box is not None and box[j] is not None:
                axes.append(np.array([float(box[j][0])]))
            else:
                # other singular coordinates need a regular value
                axes.append(np.array([0.0 if j < model.m else math.sqrt(f_min * f_max)]))

        centre = []
        for j, axis in enumerate(axes):
            if j == r:
                centre.append(0.0)
            elif anchor is not None:
                centre.append(float(anchor[j]))
            else:
                centre.append(0.5 * (axis.min() + axis.max()))

        points = [list(p) for p in itertools.product(*axes)]
        varying = [j for j, axis in enumerate(axes) if len(axis) > 1]
        return points, centre, varying, count

    def fit_singular_action(self, factor_index, grid=None):
        """
        regress sampled I_{n-k+i} on {F ln F * m, m} with m monomials in F - anchor

        args:
            factor_index: 1-based factor index
            grid: dict overriding DEFAULT_GRID (f_min, f_max, per_decade, box, box_points, anchor)

        returns:
            SingularActionFit
        """
        if not (1 <= factor_index <= self.model.k):
            raise DomainError(f"factor index must be in 1..{self.model.k}, got {factor_index}")
        i = factor_index - 1
        grid = {**DEFAULT_GRID, **(grid or {})}
        r = self.model.coordinate(i)

        points, centre, varying, count = self._grid_points(i, grid)
        values = np.array(map_ordered(lambda p: self.singular_action(i, p), points, self.settings.workers))
        monomials = _monomials(varying, self.settings.fit_degree, self.model.n)

        X = np.array(points)
        shifted = X - np.array(centre)
        logterm = X[:, r] * np.log(X[:, r])
        mono_cols = np.column_stack([np.prod(shifted ** np.array(e), axis=1) for e in monomials])
        A = np.hstack([logterm[:, None] * mono_cols, mono_cols])

        scale = np.abs(A).max(axis=0)
        scale[scale == 0] = 1.0
        An = A / scale
        coeffs, _, rank, _ = np.linalg.lstsq(An, values, rcond=None)
        if rank < A.shape[1]:
            raise FitError(f"fit basis is rank deficient on the grid ({rank} of {A.shape[1]} columns)")
        coeffs = coeffs / scale

        residual = values - A @ coeffs
        max_residual = float(np.abs(residual).max())
        magnitude = float(np.abs(values).max()) or 1.0
        if max_residual > self.settings.fit_tol * magnitude:
            raise FitError(
                f"fit residual {max_residual:.3e} exceeds fit_tol x max|I| = {self.settings.fit_tol * magnitude:.3e}"
            )

        normal = An.T @ An
        dof = max(len(values) - A.shape[1], 1)
        sigma2 = float(residual @ residual) / dof
        cov = sigma2 * np.linalg.inv(normal)
        psi0_stderr = float(math.sqrt(max(cov[0, 0], 0.0)) / scale[0])

        nterms = len(monomials)
        fit = SingularActionFit(
            factor_index=factor_index,
            psi0=float(coeffs[0]),
            psi_coeffs={_key(e): float(c) for e, c in zip(monomials, coeffs[:nterms])},
            phi_coeffs={_key(e): float(c) for e, c in zip(monomials, coeffs[nterms:])},
            max_residual=max_residual,
            grid={
                'f_min': grid['f_min'],
                'f_max': grid['f_max'],
                'per_decade': grid['per_decade'],
                'singular_points': count,
                'total_points': len(points),
                'degree': self.settings.fit_degree,
            },
            psi0_stderr=psi0_stderr,
            condition_number=float(np.linalg.cond(normal)),
            anchor=centre,
        )
        logger.info("fit factor %d: psi0=%.6g residual=%.3g cond=%.3g",
                    factor_index, fit.psi0, max_residual, fit.condition_number)
        return fit

    def period_psi_oracle(self, factor_index, f_min=1e-8, f_max=1e-4, count=41):
        """
        psi(0) of a geometric factor from its period: dI/dF = psi ln F + smooth,
        so the ln F coefficient of a regression of dI/dF on
        {ln F, 1, F ln F, F, F^2 ln F, F^2} estimates psi(0)

        returns:
            dict with 'psi0' and 'max_residual'
        """
        i = factor_index - 1
        F = np.logspace(math.log10(f_min), math.log10(f_max), count)
        slopes = np.array(map_ordered(lambda x: self.singular_action_slope(i, x), F, self.settings.workers))

        lnF = np.log(F)
        A = np.column_stack([lnF, np.ones_like(F), F * lnF, F, F * F * lnF, F * F])
        scale = np.abs(A).max(axis=0)
        coeffs, *_ = np.linalg.lstsq(A / scale, slopes, rcond=None)
        coeffs = coeffs / scale
        residual = slopes - A @ coeffs
        return {'psi0': float(coeffs[0]), 'max_residual': float(np.abs(residual).max())}
