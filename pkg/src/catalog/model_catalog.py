"""
model catalog module
assembles product integrable models (center block x hyperbolic factors),
checks the nondegeneracy hypotheses on them, and describes the corner domain
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from catalog.polynomial import Polynomial
from common.config import list_catalog_models, load_catalog_model, load_settings
from common.errors import ConfigError, DomainError, ModelSpecError

logger = logging.getLogger(__name__)

FACTOR_KINDS = ('saddle-chart', 'duffing-double-well', 'pendulum', 'synthetic-profile')
GEOMETRIC_KINDS = ('saddle-chart', 'duffing-double-well', 'pendulum')
LOBES = ('inner', 'outer')

# upper end of the regular momentum range per (kind, lobe); None means unbounded
_MOMENTUM_LIMITS = {
    ('duffing-double-well', 'inner'): 0.25,
    ('duffing-double-well', 'outer'): None,
    ('pendulum', 'inner'): 2.0,
    ('pendulum', 'outer'): None,
}


@dataclass(frozen=True)
class HyperbolicFactor:
    """one 1-DOF hyperbolic factor of the product decomposition"""

    kind: str
    params: dict
    lobe: str = 'outer'
    affine: tuple = (1.0, 0.0)
    psi: Polynomial = None
    phi: Polynomial = None

    @property
    def is_synthetic(self):
        return self.kind == 'synthetic-profile'

    @property
    def two_sided(self):
        return self.kind in ('duffing-double-well', 'pendulum')

    @property
    def momentum_sign(self):
        """dF/df between the momentum coordinate F and the native level f"""
        return -1.0 if self.two_sided and self.lobe == 'inner' else 1.0

    def native_level(self, F):
        """native level value f (pq, E, or E - 1) for momentum coordinate F"""
        return self.momentum_sign * F

    def momentum_limit(self):
        """supremum of regular momentum values, None when unbounded"""
        if self.kind == 'saddle-chart':
            return self.params['epsilon'] ** 2
        if self.is_synthetic:
            return None
        return _MOMENTUM_LIMITS[(self.kind, self.lobe)]

    def portrait(self):
        """phase-plane portrait used by the geometry module"""
        from geometry.phase_plane import portrait_for_factor

        if self.is_synthetic:
            raise DomainError("synthetic-profile factors have no phase-plane geometry")
        return portrait_for_factor(self.kind, self.params, self.lobe)


@dataclass(frozen=True)
class CenterBlock:
    """regular actions I_s = F_s, s <= n - k"""

    dim: int


@dataclass(frozen=True)
class HamiltonianProfile:
    """H(F_1, ..., F_n) as an exact polynomial"""

    polynomial: Polynomial
    degree_bound: int

    def value(self, F):
        return self.polynomial(F)

    def gradient(self, F):
        return np.array(self.polynomial.gradient(F), dtype=float)

    def hessian(self, F):
        return np.array(self.polynomial.hessian(F), dtype=float)


@dataclass(frozen=True)
class SystemModel:
    """product integrable system near a hyperbolic singular fiber"""

    center: CenterBlock
    factors: tuple
    hamiltonian: HamiltonianProfile
    label: str = ''

    @property
    def n(self):
        return self.center.dim + len(self.factors)

    @property
    def k(self):
        return len(self.factors)

    @property
    def m(self):
        """number of regular (center) coordinates"""
        return self.center.dim

    def coordinate(self, factor_index):
        """global coordinate index of the singular coordinate of factor i (0-based)"""
        return self.m + factor_index

    @property
    def singular_indices(self):
        return list(range(self.m, self.n))


@dataclass(frozen=True)
class MomentumPoint:
    """a point F in the corner domain"""

    values: tuple = field(default_factory=tuple)

    @classmethod
    def of(cls, values):
        if isinstance(values, MomentumPoint):
            return values
        return cls(tuple(float(v) for v in values))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, idx):
        return self.values[idx]

    def as_array(self):
        return np.array(self.values, dtype=float)

    def classify(self, model):
        """'regular', 'boundary' or 'outside' with respect to the corner"""
        if len(self.values) != model.n:
            raise DomainError(f"point has {len(self.values)} coordinates, model needs {model.n}")
        singular = [self.values[j] for j in model.singular_indices]
        if any(v < 0 for v in singular):
            return 'outside'
        for factor, v in zip(model.factors, singular):
            limit = factor.momentum_limit()
            if limit is not None and v >= limit:
                return 'outside'
        if any(v == 0 for v in singular):
            return 'boundary'
        return 'regular'

    def is_regular(self, model):
        return self.classify(model) == 'regular'


class CornerDomain:
    """C intersected with a coordinate box"""

    def __init__(self, model, bounds, f_floor):
        """
        args:
            model: SystemModel
            bounds: list of (lo, hi) per coordinate
            f_floor: smallest singular value used when sampling
        """
        self.model = model
        self.bounds = [tuple(b) for b in bounds]
        self.f_floor = f_floor

    def classify(self, point):
        """corner classification, 'outside' also for points outside the box"""
        point = MomentumPoint.of(point)
        for v, (lo, hi) in zip(point, self.bounds):
            if v < lo or v > hi:
                return 'outside'
        return point.classify(self.model)

    def contains_regular(self, point):
        return self.classify(point) == 'regular'

    def sample(self, count, seed=0):
        """
        scrambled halton points of the regular stratum

        singular coordinates are sampled log-uniformly so every decade is covered

        args:
            count: number of points
            seed: scrambling seed

        returns:
            list of MomentumPoint
        """
        sampler = qmc.Halton(d=self.model.n, scramble=True, seed=seed)
        unit = sampler.random(count)
        singular = set(self.model.singular_indices)

        points = []
        for row in unit:
            values = []
            for j, (u, (lo, hi)) in enumerate(zip(row, self.bounds)):
                if j in singular:
                    lo = max(lo, self.f_floor)
                    limit = self.model.factors[j - self.model.m].momentum_limit()
                    if limit is not None:
                        hi = min(hi, limit * (1.0 - 1e-9))
                    values.append(math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo))))
                else:
                    values.append(lo + u * (hi - lo))
            points.append(MomentumPoint(tuple(values)))
        return points

    def describe(self):
        return {
            'label': self.model.label,
            'bounds': [list(b) for b in self.bounds],
            'singular_indices': self.model.singular_indices,
        }


class ModelCatalog:
    """builds, serializes and validates models"""

    def __init__(self, settings=None):
        """
        args:
            settings: Settings instance, defaults loaded from config/config.yaml
        """
        self.settings = settings or load_settings()

    def list_models(self):
        """names of the shipped catalog models"""
        return list_catalog_models()

    def load_model(self, name):
        """build a shipped catalog model by name"""
        return self.build_model(load_catalog_model(name))

    def _build_factor(self, idx, spec, n):
        where = f'factors[{idx}]'
        if not isinstance(spec, dict):
            raise ModelSpecError(f"factor {idx} must be an object", field=where)

        kind = spec.get('kind')
        if kind not in FACTOR_KINDS:
            raise ModelSpecError(f"unknown factor kind '{kind}', must be one of {list(FACTOR_KINDS)}", field=f'{where}.kind')

        lobe = spec.get('lobe', 'outer')
        if lobe not in LOBES:
            raise ModelSpecError(f"lobe must be one of {list(LOBES)}, got '{lobe}'", field=f'{where}.lobe')

        params = spec.get('params', {})
        if not isinstance(params, dict):
            raise ModelSpecError("params must be an object", field=f'{where}.params')

        affine = spec.get('action_affine', [1.0, 0.0])
        if (not isinstance(affine, list) or len(affine) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in affine)):
            raise ModelSpecError("action_affine must be [a, b]", field=f'{where}.action_affine')
        if affine[0] == 0:
            raise ModelSpecError("action_affine scale must be nonzero", field=f'{where}.action_affine')
        affine = (float(affine[0]), float(affine[1]))

        psi = phi = None
        if kind == 'saddle-chart':
            eps = params.get('epsilon')
            if isinstance(eps, bool) or not isinstance(eps, (int, float)):
                raise ModelSpecError("saddle-chart needs a numeric 'epsilon'", field=f'{where}.params.epsilon')
            if eps <= 0:
                raise ModelSpecError(f"saddle-chart half-width must be positive, got {eps}", field=f'{where}.params.epsilon')
            params = {'epsilon': float(eps)}
        elif kind == 'synthetic-profile':
            if 'psi' not in params or 'phi' not in params:
                raise ModelSpecError("synthetic-profile needs 'psi' and 'phi' term lists", field=f'{where}.params')
            psi = Polynomial.from_terms(n, params['psi'], field=f'{where}.params.psi')
            phi = Polynomial.from_terms(n, params['phi'], field=f'{where}.params.phi')
            psi0 = psi([0.0] * n)
            if abs(psi0) <= self.settings.tol_nonzero:
                raise ModelSpecError(f"synthetic psi must not vanish at the origin, psi(0) = {psi0}", field=f'{where}.params.psi')
            params = {'psi': psi.to_terms(), 'phi': phi.to_terms()}
        else:
            if params:
                raise ModelSpecError(f"{kind} takes no parameters", field=f'{where}.params')
            params = {}

        return HyperbolicFactor(kind=kind, params=params, lobe=lobe, affine=affine, psi=psi, phi=phi)

    def build_model(self, spec):
        """
        assemble a SystemModel from its json description

        args:
            spec: dict with label, center_dim, factors, hamiltonian

        returns:
            validated SystemModel
        """
        if not isinstance(spec, dict):
            raise ModelSpecError("model spec must be an object", field='model')

        for key in ('label', 'center_dim', 'factors', 'hamiltonian'):
            if key not in spec:
                raise ModelSpecError(f"model spec missing '{key}'", field=key)

        label = spec['label']
        if not isinstance(label, str):
            raise ModelSpecError("label must be a string", field='label')

        center_dim = spec['center_dim']
        if isinstance(center_dim, bool) or not isinstance(center_dim, int) or center_dim < 0:
            raise ModelSpecError("center_dim must be a non-negative integer", field='center_dim')

        factor_specs = spec['factors']
        if not isinstance(factor_specs, list) or not factor_specs:
            raise ModelSpecError("at least one hyperbolic factor is required", field='factors')

        n = center_dim + len(factor_specs)
        factors = tuple(self._build_factor(i, f, n) for i, f in enumerate(factor_specs))

        hamiltonian = spec['hamiltonian']
        if not isinstance(hamiltonian, dict) or 'terms' not in hamiltonian:
            raise ModelSpecError("hamiltonian must be an object with 'terms'", field='hamiltonian.terms')
        poly = Polynomial.from_terms(n, hamiltonian['terms'], field='hamiltonian.terms')
        if poly.degree > self.settings.max_degree:
            raise ModelSpecError(
                f"hamiltonian degree {poly.degree} exceeds bound {self.settings.max_degree}",
                field='hamiltonian.terms',
            )

        model = SystemModel(
            center=CenterBlock(center_dim),
            factors=factors,
            hamiltonian=HamiltonianProfile(poly, self.settings.max_degree),
            label=label,
        )
        logger.debug("built model '%s' n=%d k=%d", label, model.n, model.k)
        return model

    def serialize(self, model):
        """json description that build_model maps back to an equal model"""
        factors = []
        for factor in model.factors:
            record = {'kind': factor.kind, 'params': factor.params, 'lobe': factor.lobe}
            if factor.affine != (1.0, 0.0):
                record['action_affine'] = list(factor.affine)
            factors.append(record)

        return {
            'label': model.label,
            'center_dim': model.center.dim,
            'factors': factors,
            'hamiltonian': {'terms': model.hamiltonian.polynomial.to_terms()},
        }

    def dumps(self, model):
        return json.dumps(self.serialize(model), sort_keys=True, indent=2)

    def loads(self, text):
        try:
            return self.build_model(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"model is not valid json: {e}", field='model')

    def validate_conditions(self, model):
        """
        check the nondegeneracy hypotheses at the singular image point F = 0

        condition 3: dH/dF_{n-k+i}(0) != 0 for every factor
        condition 4: det(d2H/dF_s dF_t)_{s,t <= n-k}(0) != 0 (vacuous when k = n)
        condition 5: the singular momentum coordinates are action-normalized

        args:
            model: SystemModel

        returns:
            dict with 'passed': bool and per-condition 'conditions' entries
        """
        tol = self.settings.tol_nonzero
        origin = [0.0] * model.n
        grad = model.hamiltonian.gradient(origin)
        entries = []

        for i in range(model.k):
            value = float(grad[model.coordinate(i)])
            entries.append({
                'condition': 3,
                'factor_index': i + 1,
                'value': value,
                'passed': abs(value) > tol,
                'witness': origin,
                'detail': f'dH/dF{model.coordinate(i) + 1}(0)',
            })

        if model.m == 0:
            entries.append({
                'condition': 4,
                'factor_index': None,
                'value': None,
                'passed': True,
                'vacuous': True,
                'witness': origin,
                'detail': 'center manifold is a point',
            })
        else:
            center = model.hamiltonian.hessian(origin)[:model.m, :model.m]
            det = float(np.linalg.det(center))
            entries.append({
                'condition': 4,
                'factor_index': None,
                'value': det,
                'passed': abs(det) > tol,
                'vacuous': False,
                'witness': origin,
                'detail': 'det of center hessian at 0',
            })

        for i, factor in enumerate(model.factors):
            detail = 'F vanishes on the singular fiber by construction'
            if factor.is_synthetic:
                detail = f'synthetic profile, psi(0) = {factor.psi(origin)}'
            entries.append({
                'condition': 5,
                'factor_index': i + 1,
                'value': None,
                'passed': True,
                'witness': origin,
                'detail': detail,
            })

        passed = all(e['passed'] for e in entries)
        if not passed:
            failed = [e['condition'] for e in entries if not e['passed']]
            logger.info("model '%s' fails conditions %s", model.label, sorted(set(failed)))

        return {'label': model.label, 'passed': passed, 'tol_nonzero': tol, 'conditions': entries}

    def corner_domain(self, model, box):
        """
        describe C intersected with a box

        args:
            model: SystemModel
            box: list of (lo, hi) per coordinate

        returns:
            CornerDomain
        """
        if len(box) != model.n:
            raise DomainError(f"box has {len(box)} intervals, model needs {model.n}")

        bounds = []
        for j, interval in enumerate(box):
            if len(interval) != 2:
                raise DomainError(f"box interval {j} must be (lo, hi)")
            lo, hi = float(interval[0]), float(interval[1])
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise DomainError(f"box interval {j} must be finite")
            if lo > hi:
                raise DomainError(f"box interval {j} is empty: [{lo}, {hi}]")
            if j >= model.m:
                if hi <= 0:
                    raise DomainError(f"box interval {j} misses the corner: upper bound {hi} must be positive")
                lo = max(lo, 0.0)
            bounds.append((lo, hi))

        return CornerDomain(model, bounds, self.settings.f_floor)


def permute_factors(model, order):
    """
    reorder the hyperbolic factors (and the matching hamiltonian variables)

    args:
        model: SystemModel
        order: new position j holds old factor order[j]

    returns:
        SystemModel describing the same system
    """
    variables = list(range(model.m)) + [model.m + o for o in order]
    factors = []
    for o in order:
        f = model.factors[o]
        psi = f.psi.permuted(variables) if f.psi else None
        phi = f.phi.permuted(variables) if f.phi else None
        params = {'psi': psi.to_terms(), 'phi': phi.to_terms()} if f.is_synthetic else f.params
        factors.append(HyperbolicFactor(f.kind, params, f.lobe, f.affine, psi, phi))

    return SystemModel(
        center=model.center,
        factors=tuple(factors),
        hamiltonian=HamiltonianProfile(model.hamiltonian.polynomial.permuted(variables), model.hamiltonian.degree_bound),
        label=model.label,
    )
