"""
asymptotics module
scans det(d2H/dIdI) along paths into the singular fiber: the scaled
sequence det * prod F (ln F)^3 and its limit g, exponent regression,
divergence, frequency decay, block asymptotics and the sampled verdict
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from calculus.hessian_calculus import HessianCalculator
from catalog.model_catalog import ModelCatalog
from common.config import load_settings
from common.errors import DomainError, KProbeError
from common.workers import map_ordered

logger = logging.getLogger(__name__)

VERDICTS = ('kolmogorov-holds', 'hypothesis-violated', 'inconclusive')
DIVERGENCE_THRESHOLDS = (10.0, 1e3, 1e6)
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class SingularPath:
    """F(t) = smooth + c t on the singular coordinates, t log-spaced and decreasing"""

    coefficients: tuple
    smooth: tuple
    t_min: float
    t_max: float
    count: int = 40

    @classmethod
    def from_spec(cls, spec, model):
        """
        build from a config 'path' object

        args:
            spec: dict with coefficients, smooth, t_min, t_max, points
            model: SystemModel the path must fit

        returns:
            SingularPath
        """
        coefficients = spec.get('coefficients', [1.0] * model.k)
        smooth = spec.get('smooth', [0.0] * model.m)
        path = cls(
            coefficients=tuple(float(c) for c in coefficients),
            smooth=tuple(float(s) for s in smooth),
            t_min=float(spec.get('t_min', 1e-8)),
            t_max=float(spec.get('t_max', 1e-3)),
            count=int(spec.get('points', 40)),
        )
        path.validate(model)
        return path

    def validate(self, model):
        if len(self.coefficients) != model.k:
            raise DomainError(f"path needs {model.k} coefficients, got {len(self.coefficients)}")
        if len(self.smooth) != model.m:
            raise DomainError(f"path needs {model.m} smooth coordinates, got {len(self.smooth)}")
        if any(c <= 0 for c in self.coefficients):
            raise DomainError("path coefficients must be positive")
        if not (0 < self.t_min < self.t_max):
            raise DomainError(f"path needs 0 < t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.count < 2:
            raise DomainError("path needs at least 2 samples")

    @property
    def t(self):
        """log-spaced samples, strictly decreasing"""
        return np.logspace(math.log10(self.t_max), math.log10(self.t_min), self.count)

    def point(self, t):
        return list(self.smooth) + [c * t for c in self.coefficients]

    def points(self):
        return [self.point(t) for t in self.t]

    def to_record(self):
        return {
            'coefficients': list(self.coefficients),
            'smooth': list(self.smooth),
            't_min': self.t_min,
            't_max': self.t_max,
            'points': self.count,
        }


@dataclass
class HessianScalingReport:
    """det along a path and its scaling-law diagnostics"""

    path: SingularPath
    t: list
    points: list
    raw_det: list
    scaled: list
    running_g: list
    g_estimate: float
    g_method: str
    g_spread: float
    exponents: tuple
    exponent_stderr: tuple
    verdict: str
    conditions_passed: bool = True
    tail_spread: float = math.nan
    notes: list = field(default_factory=list)

    def to_rows(self):
        """CSV rows: t, F1..Fn, detHess, scaled, running_g"""
        rows = []
        for t, F, det, scaled, running in zip(self.t, self.points, self.raw_det, self.scaled, self.running_g):
            row = {'t': float(t)}
            for j, v in enumerate(F):
                row[f'F{j + 1}'] = float(v)
            row['detHess'] = float(det)
            row['scaled'] = float(scaled)
            row['running_g'] = float(running)
            rows.append(row)
        return rows

    def to_record(self):
        return {
            'path': self.path.to_record(),
            'g_estimate': self.g_estimate,
            'g_method': self.g_method,
            'g_spread': self.g_spread,
            'tail_spread': self.tail_spread,
            'exponents': {'a': self.exponents[0], 'b': self.exponents[1]},
            'exponent_stderr': {'a': self.exponent_stderr[0], 'b': self.exponent_stderr[1]},
            'verdict': self.verdict,
            'conditions_passed': self.conditions_passed,
            'notes': list(self.notes),
            'samples': self.to_rows(),
        }


def tail_of(values, tail_min):
    values = list(values)
    size = min(len(values), max(tail_min, len(values) // 2))
    return values[-size:]


def relative_spread(values):
    values = np.asarray(values, dtype=float)
    median = float(np.median(values))
    if median == 0.0:
        return math.inf
    return float((values.max() - values.min()) / abs(median))


def aitken_limit(values):
    """
    aitken delta-squared on the last three terms

    returns:
        (limit, method) with method 'aitken' or 'last-value'
    """
    values = [float(v) for v in values]
    if len(values) < 3:
        return values[-1], 'last-value'
    x0, x1, x2 = values[-3:]
    denom = x2 - 2.0 * x1 + x0
    scale = max(abs(x0), abs(x1), abs(x2), 1e-300)
    if abs(denom) <= 1e-12 * scale:
        return x2, 'last-value'
    accelerated = x2 - (x2 - x1) ** 2 / denom
    # acceleration must stay within the range the tail already spans
    if not math.isfinite(accelerated) or abs(accelerated - x2) > abs(x2 - x0) + 1e-15 * scale:
        return x2, 'last-value'
    return accelerated, 'aitken'


def log_extrapolate(x, values, power=1.0, degree=1):
    """
    limit as x -> 0 of a sequence with corrections in powers of 1/ln x

    |values|**power is regressed on powers of s = -1/ln x and the intercept
    mapped back; each singular factor contributes (1 + c/ln F)^-3 to the
    scaled determinant, so power -1/3 straightens it. with enough samples
    x ln x and x join the basis for the analytic part of the actions

    args:
        x: positive sample parameters below 1, F or the path parameter
        values: sequence of one sign
        power: straightening exponent, nonzero
        degree: polynomial degree in s, capped so the fit keeps a residual

    returns:
        (limit, method) with method 'log-extrapolated', else the aitken fallback
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) < 3 or np.any(x <= 0.0) or np.any(x >= 1.0) or not np.all(np.isfinite(values)):
        return aitken_limit(values)
    sign = np.sign(values[-1])
    if sign == 0.0 or np.any(np.sign(values) != sign):
        return aitken_limit(values)

    s = -1.0 / np.log(x)
    columns = [s ** j for j in range(min(degree, len(values) - 2) + 1)]
    if len(values) >= len(columns) + 4:
        columns += [x * np.log(x), x]
    A = np.column_stack(columns)
    scale = np.abs(A).max(axis=0)
    coeffs, *_ = np.linalg.lstsq(A / scale, np.abs(values) ** power, rcond=None)
    intercept = float(coeffs[0] / scale[0])
    if not (math.isfinite(intercept) and intercept > 0.0):
        return aitken_limit(values)
    return float(sign * intercept ** (1.0 / power)), 'log-extrapolated'


def running_log_limits(x, values, power=1.0, degree=1, window=10):
    """log_extrapolate over the trailing window ending at every sample"""
    out = []
    for i in range(len(values)):
        lo = max(0, i + 1 - window)
        out.append(log_extrapolate(x[lo:i + 1], values[lo:i + 1], power, degree)[0])
    return out


def oscillates(values, tol):
    """direction changes larger than tol (absolute) in a sequence"""
    diffs = [b - a for a, b in zip(values, values[1:]) if abs(b - a) > tol]
    return any(d1 * d2 < 0 for d1, d2 in zip(diffs, diffs[1:]))


def fit_exponents(sum_log, sum_loglog, log_det):
    """
    regress log|det| = c - a sum ln F - b sum ln|ln F|

    returns:
        ((a, b), (stderr_a, stderr_b), c)
    """
    X = np.column_stack([np.ones_like(sum_log), -sum_log, -sum_loglog])
    coeffs, *_ = np.linalg.lstsq(X, log_det, rcond=None)
    residual = log_det - X @ coeffs
    sigma = max(float(np.sqrt(np.mean(residual ** 2))), SIGMA_FLOOR)
    cov = sigma ** 2 * np.linalg.inv(X.T @ X)
    stderr = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return (float(coeffs[1]), float(coeffs[2])), (float(stderr[1]), float(stderr[2])), float(coeffs[0])


class AsymptoticsVerifier:
    """scaling-law checks for one model"""

    def __init__(self, model, settings=None, catalog=None, calculator=None):
        """
        args:
            model: SystemModel
            settings: Settings instance
            catalog: ModelCatalog used for the hypothesis checks
            calculator: HessianCalculator to share caches
        """
        self.model = model
        self.settings = settings or load_settings()
        self.catalog = catalog or ModelCatalog(self.settings)
        self.calculator = calculator or HessianCalculator(model, self.settings)

    def _samples(self, path):
        path.validate(self.model)
        floor = self.settings.f_floor
        lowest = min(path.coefficients) * path.t_min
        if lowest < floor:
            raise DomainError(f"path reaches F = {lowest:.3e}, below f_floor = {floor:.1e}")
        return map_ordered(self.calculator.det_hessian, path.points(), self.settings.workers)

    def _singular(self, F):
        return [F[j] for j in self.model.singular_indices]

    def _scale_factor(self, F):
        return math.prod(x * math.log(x) ** 3 for x in self._singular(F))

    def _mean_singular(self, F):
        return math.exp(sum(math.log(x) for x in self._singular(F)) / self.model.k)

    def _limit(self, x, values, power=1.0, degree=1):
        """
        log-extrapolated limit of a sequence along a path

        returns:
            (limit, method, spread, running) where spread is the relative
            spread of the running limits over the tail
        """
        window = self.settings.tail_min
        running = running_log_limits(x, values, power, degree, window)
        tail = tail_of(values, window)
        limit, method = log_extrapolate(x[-len(tail):], tail, power, degree)
        spread = relative_spread(tail_of(running, window))
        return limit, method, spread, running

    def scaled_det_path(self, path):
        """
        det_hessian along the path, scaled by prod F (ln F)^3

        args:
            path: SingularPath

        returns:
            HessianScalingReport
        """
        conditions = self.catalog.validate_conditions(self.model)
        samples = self._samples(path)
        points = [list(s.F.values) for s in samples]
        raw = [s.detHess for s in samples]
        scaled = [d * self._scale_factor(F) for d, F in zip(raw, points)]

        tail = tail_of(scaled, self.settings.tail_min)
        x = [self._mean_singular(F) for F in points]
        g_estimate, g_method, g_spread, running_g = self._limit(x, scaled, -1.0 / 3.0, self.model.k)
        tail_spread = relative_spread(tail)

        sum_log = np.array([sum(math.log(x) for x in self._singular(F)) for F in points])
        sum_loglog = np.array([sum(math.log(abs(math.log(x))) for x in self._singular(F)) for F in points])
        log_det = np.log(np.maximum(np.abs(raw), 1e-300))
        exponents, stderr, _ = fit_exponents(sum_log, sum_loglog, log_det)

        notes = []
        if len(scaled) < self.settings.tail_min:
            notes.append(f"tail has {len(tail)} samples, fewer than tail_min = {self.settings.tail_min}")
        if not conditions['passed']:
            verdict = 'hypothesis-violated'
            notes.append('model fails the nondegeneracy conditions; scan kept for diagnostics')
        elif oscillates(tail, self.settings.g_tol * abs(g_estimate)):
            verdict = 'inconclusive'
            notes.append('scaled tail oscillates beyond g_tol')
        elif abs(g_estimate) > self.settings.tol_nonzero and g_spread <= self.settings.g_tol:
            verdict = 'kolmogorov-holds'
        else:
            verdict = 'inconclusive'
            notes.append(f'g_spread {g_spread:.3g} or |g| {abs(g_estimate):.3g} outside thresholds')

        report = HessianScalingReport(
            path=path,
            t=list(path.t),
            points=points,
            raw_det=raw,
            scaled=scaled,
            running_g=running_g,
            g_estimate=g_estimate,
            g_method=g_method,
            g_spread=g_spread,
            exponents=exponents,
            exponent_stderr=stderr,
            verdict=verdict,
            conditions_passed=conditions['passed'],
            tail_spread=tail_spread,
            notes=notes,
        )
        logger.info("scaled det on '%s': g=%.8g (%s) spread=%.3g raw tail %.3g a=%.4f b=%.4f -> %s",
                    self.model.label, g_estimate, g_method, g_spread, tail_spread, exponents[0], exponents[1], verdict)
        return report

    def divergence_check(self, path):
        """
        |detHess| grows monotonically as t decreases and crosses the
        thresholds 10, 1e3, 1e6 inside the sampled range

        returns:
            dict record; failure is a negative record, never an exception
        """
        try:
            samples = self._samples(path)
        except KProbeError as e:
            return {'passed': False, 'error': str(e), 'crossings': []}

        t = list(path.t)
        dets = [abs(s.detHess) for s in samples]
        noise = self.settings.cross_tol

        # eventual monotonicity: the last index from which |det| never drops
        start = len(dets) - 1
        while start > 0 and dets[start - 1] <= dets[start] * (1.0 + noise):
            start -= 1
        eventually_monotone = start <= len(dets) // 2

        crossings = []
        for threshold in DIVERGENCE_THRESHOLDS:
            entry = {'threshold': threshold, 'reached': False, 't': None}
            for idx in range(start, len(dets) - 1):
                if dets[idx] < threshold <= dets[idx + 1]:
                    entry['reached'] = True
                    entry['t'] = self._refine_crossing(path, threshold, t[idx + 1], t[idx])
                    break
            if not entry['reached'] and dets[start] >= threshold:
                entry['reached'] = True
                entry['t'] = t[start]
                entry['note'] = 'already exceeded at the start of the monotone tail'
            crossings.append(entry)

        record = {
            'passed': eventually_monotone and dets[-1] >= max(dets[start:]) * (1.0 - noise),
            'eventually_monotone': eventually_monotone,
            'monotone_from_t': t[start],
            'max_abs_det': max(dets),
            'crossings': crossings,
        }
        logger.info("divergence on '%s': monotone from t=%.3g, max |det| = %.3g",
                    self.model.label, t[start], record['max_abs_det'])
        return record

    def _refine_crossing(self, path, threshold, t_lo, t_hi):
        def excess(s):
            det = self.calculator.det_hessian(path.point(math.exp(s))).detHess
            return math.log(abs(det)) - math.log(threshold)

        try:
            s = brentq(excess, math.log(t_lo), math.log(t_hi), xtol=self.settings.cross_tol)
        except ValueError:
            # not bracketed once recomputed; keep the sampled end
            return t_lo
        return math.exp(s)

    def frequency_decay_check(self, path):
        """
        Gamma_r ln F_r stabilizes to a nonzero constant for every factor and
        the center frequencies approach dH/dF_s at (smooth, 0)

        returns:
            dict record
        """
        try:
            samples = self._samples(path)
        except KProbeError as e:
            return {'passed': False, 'error': str(e), 'singular': [], 'center': []}

        g_tol = self.settings.g_tol
        singular = []
        for i, r in enumerate(self.model.singular_indices):
            products = [s.Gamma[r] * math.log(s.F[r]) for s in samples]
            limit, _, spread, _ = self._limit([s.F[r] for s in samples], products, power=-1.0)
            singular.append({
                'factor_index': i + 1,
                'limit': limit,
                'spread': spread,
                'passed': abs(limit) > self.settings.tol_nonzero and spread <= g_tol,
            })

        base = list(path.smooth) + [0.0] * self.model.k
        expected = self.model.hamiltonian.gradient(base)
        center = []
        for s_idx in range(self.model.m):
            errors = [abs(s.Gamma[s_idx] - expected[s_idx]) for s in samples]
            bound = g_tol * max(1.0, abs(expected[s_idx]))
            center.append({
                'coordinate': s_idx + 1,
                'expected': float(expected[s_idx]),
                'final': float(samples[-1].Gamma[s_idx]),
                'final_error': errors[-1],
                'passed': errors[-1] <= bound and errors[-1] <= errors[0] + bound,
            })

        return {
            'passed': all(e['passed'] for e in singular + center),
            'singular': singular,
            'center': center,
        }

    def block_asymptotics(self, path):
        """
        the four block sequences along the path with their limits and tail
        spreads: J_rr / ln F_r, det J / prod ln F, Gamma_r ln F_r and
        dGamma_r/dF_r F_r (ln F_r)^2

        returns:
            dict record
        """
        samples = self._samples(path)
        sequences = {}

        def summarize(name, x, values, power, degree=1):
            limit, method, spread, _ = self._limit(x, values, power, degree)
            sequences[name] = {
                'values': [float(v) for v in values],
                'limit': limit,
                'method': method,
                'spread': spread,
                'passed': abs(limit) > self.settings.tol_nonzero and spread <= self.settings.g_tol,
            }

        for i, r in enumerate(self.model.singular_indices):
            F = [s.F[r] for s in samples]
            logs = [math.log(v) for v in F]
            summarize(f'dI_dF_over_lnF[{i + 1}]', F, [s.J[r, r] / L for s, L in zip(samples, logs)], 1.0)
            summarize(f'Gamma_lnF[{i + 1}]', F, [s.Gamma[r] * L for s, L in zip(samples, logs)], -1.0)
            summarize(f'dGamma_dF_FlnF2[{i + 1}]', F,
                      [s.dGamma_dF[r, r] * s.F[r] * L * L for s, L in zip(samples, logs)], -0.5)

        summarize('detJ_over_prod_lnF', [self._mean_singular(list(s.F.values)) for s in samples], [
            s.detJ / math.prod(math.log(s.F[r]) for r in self.model.singular_indices) for s in samples
        ], 1.0, self.model.k)
        return {'passed': all(v['passed'] for v in sequences.values()), 'sequences': sequences}

    def verify_kolmogorov(self, box, samples, seed=0):
        """
        sampled nondegeneracy verdict on the regular part of a corner box

        args:
            box: list of (lo, hi) per coordinate
            samples: number of halton points, at least 100
            seed: scrambling seed

        returns:
            dict record with verdict, min |detHess| and witnesses
        """
        if samples < 100:
            raise DomainError(f"verify_kolmogorov needs at least 100 samples, got {samples}")
        domain = self.catalog.corner_domain(self.model, box)
        points = domain.sample(samples, seed)
        conditions = self.catalog.validate_conditions(self.model)

        def evaluate(point):
            try:
                return self.calculator.det_hessian(point).detHess, None
            except KProbeError as e:
                return None, str(e)

        results = map_ordered(evaluate, points, self.settings.workers)

        failures = []
        best = None
        for point, (det, error) in zip(points, results):
            if error is not None:
                failures.append({'point': list(point.values), 'error': error})
                continue
            if abs(det) <= self.settings.tol_nonzero:
                failures.append({'point': list(point.values), 'detHess': det})
            if best is None or abs(det) < abs(best[1]):
                best = (list(point.values), det)

        witnesses = [
            {'condition': e['condition'], 'factor_index': e['factor_index'], 'value': e['value'], 'point': e['witness']}
            for e in conditions['conditions'] if not e['passed']
        ]
        if any(w['condition'] == 4 for w in witnesses):
            witnesses.append(self._center_witness(domain))

        if not conditions['passed']:
            verdict = 'hypothesis-violated'
        elif failures:
            verdict = 'inconclusive'
        else:
            verdict = 'kolmogorov-holds'

        record = {
            'label': self.model.label,
            'verdict': verdict,
            'samples': samples,
            'seed': seed,
            'box': domain.describe()['bounds'],
            'min_abs_det': abs(best[1]) if best else None,
            'min_location': best[0] if best else None,
            'failures': failures,
            'witnesses': witnesses,
            'conditions': conditions,
        }
        logger.info("verify_kolmogorov on '%s': %s, min |det| = %s", self.model.label, verdict, record['min_abs_det'])
        return record

    def _center_witness(self, domain):
        """det at the smooth coordinates 0, where the center hessian degenerates"""
        point = [0.0] * self.model.m
        for j in self.model.singular_indices:
            lo, hi = domain.bounds[j]
            lo = max(lo, self.settings.f_floor)
            point.append(math.sqrt(lo * hi))
        try:
            det = self.calculator.det_hessian(point).detHess
        except KProbeError as e:
            return {'condition': 4, 'point': point, 'error': str(e)}
        return {'condition': 4, 'point': point, 'detHess': det}
