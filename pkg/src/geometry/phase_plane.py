"""
phase-plane geometry of 1-DOF hyperbolic factors
level curves, turning points, loop actions (integral of p dq), periods and
separatrix areas; the catalog factors are described by portraits
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from common.config import load_settings
from common.errors import DomainError, LevelSetError
from geometry.quadrature import integrate_segments, integrate_tanh_sinh

logger = logging.getLogger(__name__)

_MAX_VERTICES = 1_000_000
_MAX_HALVINGS = 30
_NEWTON_ITER = 20


@dataclass
class TurningPointSet:
    """points where the loop integrand is square-root singular (or branch ends)"""

    points: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)


@dataclass
class LevelCurve:
    """oriented polylines of one level set"""

    branches: list
    closed: list
    f_value: float

    def to_frame(self):
        """one row per vertex: branch, q, p"""
        frames = []
        for idx, branch in enumerate(self.branches):
            frames.append(pd.DataFrame({'branch': idx, 'q': branch[:, 0], 'p': branch[:, 1]}))
        return pd.concat(frames, ignore_index=True)

    def dump_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        logger.debug("wrote level curve f=%r to %s", self.f_value, path)


class PhasePortrait:
    """a 1-DOF hamiltonian h(q, p) together with the cycle family of one lobe"""

    name = 'portrait'

    def __init__(self, lobe):
        self.lobe = lobe

    # hamiltonian and derivatives, vectorized

    def value(self, q, p):
        raise NotImplementedError

    def gradient(self, q, p):
        raise NotImplementedError

    def hessian(self, q, p):
        raise NotImplementedError

    # cycle family

    def check_level(self, f, separatrix=False):
        raise NotImplementedError

    def turning_points(self, f, settings):
        raise NotImplementedError

    def loop_action(self, f, settings):
        raise NotImplementedError

    def period(self, f, settings):
        raise NotImplementedError

    def separatrix_area(self, settings):
        raise NotImplementedError

    def trace(self, f, settings, separatrix=False):
        raise NotImplementedError

    # tracing

    def _tangent(self, x):
        gq, gp = self.gradient(x[0], x[1])
        norm = math.hypot(gq, gp)
        if norm < 1e-14:
            raise LevelSetError(f"{self.name}: gradient vanishes at ({x[0]}, {x[1]}) while tracing")
        return np.array([gp, -gq]) / norm, norm

    def _curvature(self, x, tangent, grad_norm):
        (hqq, hqp), (_, hpp) = self.hessian(x[0], x[1])
        t0, t1 = tangent
        return abs(hqq * t0 * t0 + 2.0 * hqp * t0 * t1 + hpp * t1 * t1) / grad_norm

    def _correct(self, y, f, tol):
        for _ in range(_NEWTON_ITER):
            residual = self.value(y[0], y[1]) - f
            if abs(residual) < tol:
                return y
            gq, gp = self.gradient(y[0], y[1])
            norm2 = gq * gq + gp * gp
            if norm2 == 0.0:
                return None
            y = y - residual * np.array([gq, gp]) / norm2
        return y if abs(self.value(y[0], y[1]) - f) < tol else None

    def _march(self, start, f, settings, stop):
        """
        arc-length predictor-corrector along the hamiltonian flow

        args:
            start: first vertex, on the level set
            f: level value
            settings: Settings (max_step, angle_step, trace_tol)
            stop: callable(previous, candidate) returning an exact end vertex or None

        returns:
            (N, 2) array of vertices
        """
        x = np.asarray(start, dtype=float)
        vertices = [x]
        max_step = settings.max_step
        tol = 0.1 * settings.trace_tol

        while len(vertices) < _MAX_VERTICES:
            tangent, grad_norm = self._tangent(x)
            kappa = self._curvature(x, tangent, grad_norm)
            step = 0.9 * max_step
            if kappa > 0:
                step = min(step, settings.angle_step / kappa)

            for _ in range(_MAX_HALVINGS):
                y = self._correct(x + step * tangent, f, tol)
                if y is not None and np.linalg.norm(y - x) <= max_step:
                    break
                step *= 0.5
            else:
                raise LevelSetError(f"{self.name}: corrector failed near ({x[0]}, {x[1]})")

            end = stop(x, y)
            if end is not None:
                vertices.append(np.asarray(end, dtype=float))
                return np.array(vertices)

            vertices.append(y)
            x = y

        raise LevelSetError(f"{self.name}: tracing exceeded {_MAX_VERTICES} vertices")


def locate_turning_point(potential, force, f, lo, hi, root_tol):
    """
    solve W(q) = f on a sign-changing bracket, then polish with newton

    args:
        potential: W(q)
        force: W'(q)
        f: level
        lo, hi: bracket
        root_tol: target accuracy

    returns:
        q
    """
    g = lambda q: potential(q) - f
    q = brentq(g, lo, hi, xtol=1e-300, rtol=8.9e-16, maxiter=500)
    for _ in range(3):
        slope = force(q)
        if slope == 0.0:
            break
        polished = q - g(q) / slope
        if not (lo <= polished <= hi) or abs(g(polished)) >= abs(g(q)):
            break
        q = polished
    if abs(g(q)) > root_tol * max(1.0, abs(f)):
        logger.debug("turning point residual %g at q=%r", abs(g(q)), q)
    return q


class MechanicalPortrait(PhasePortrait):
    """h = p^2/2 + W(q), with W normalized to vanish on the separatrix level"""

    saddles = ()

    def potential(self, q):
        raise NotImplementedError

    def force(self, q):
        raise NotImplementedError

    def stiffness(self, q):
        raise NotImplementedError

    def value(self, q, p):
        return 0.5 * p * p + self.potential(q)

    def gradient(self, q, p):
        return self.force(q), p

    def hessian(self, q, p):
        return (self.stiffness(q), 0.0), (0.0, 1.0)

    def excess(self, q, f):
        """f - W(q)"""
        return f - self.potential(q)

    def factored_excess(self, q, f, turning, to_left, to_right):
        """
        f - W(q) written through the distances to the left and right turning
        points, so it keeps full relative accuracy where the cycle touches p = 0
        """
        return self.excess(q, f)

    def momentum(self, q, f):
        """upper branch p(q) >= 0 at level f, vectorized"""
        return np.sqrt(np.maximum(2.0 * self.excess(q, f), 0.0))

    def _cycle_integrand(self, f, turning, kernel):
        """
        kernel(p^2) on one segment; at a segment end that is a turning point
        the distance comes from the quadrature map instead of q - q_turn
        """
        (left, _), (right, _) = turning.points

        def integrand(q, to_a, to_b, segment):
            a, b = segment
            to_left = to_a if a == left else q - left
            to_right = to_b if b == right else right - q
            return kernel(2.0 * self.factored_excess(q, f, turning, to_left, to_right))

        return integrand

    def _integrate_cycle(self, f, settings, kernel):
        self.check_level(f)
        pieces, multiplicity, turning = self.segments(f, settings)
        integrand = self._cycle_integrand(f, turning, kernel)
        total = integrate_segments(integrand, pieces, settings.quad_tol, settings.max_levels, distances=True)
        return multiplicity * total

    def segments(self, f, settings):
        """
        integration pieces of the selected cycle, the number of times each
        piece is traversed (2 for upper + lower arcs) and the turning points
        """
        raise NotImplementedError

    def separatrix_segments(self):
        raise NotImplementedError

    def loop_action(self, f, settings):
        return self._integrate_cycle(f, settings, lambda p2: np.sqrt(np.maximum(p2, 0.0)))

    def period(self, f, settings):
        with np.errstate(divide='ignore', invalid='ignore'):
            return self._integrate_cycle(f, settings, lambda p2: 1.0 / np.sqrt(p2))

    def separatrix_area(self, settings):
        pieces, multiplicity = self.separatrix_segments()
        integrand = lambda q: self.momentum(q, 0.0)
        return multiplicity * integrate_segments(integrand, pieces, settings.quad_tol, settings.max_levels)

    def _upper_arc(self, left, right, f, settings):
        """trace p >= 0 from turning point left to turning point right"""
        end = np.array([right, 0.0])

        def stop(previous, candidate):
            if candidate[1] < 0.0 or candidate[0] >= right:
                return end
            return None

        return self._march(np.array([left, 0.0]), f, settings, stop)

    def _closed_from_upper(self, upper):
        """close an upper arc with its mirror image p -> -p"""
        lower = upper[::-1][1:].copy()
        lower[:, 1] = -lower[:, 1]
        return np.vstack([upper, lower])


class DuffingPortrait(MechanicalPortrait):
    """double well h = p^2/2 + q^4/4 - q^2/2, inner lobe = right well"""

    name = 'duffing-double-well'
    saddles = (0.0,)

    def potential(self, q):
        q2 = q * q
        return 0.25 * q2 * q2 - 0.5 * q2

    def force(self, q):
        return q * q * q - q

    def stiffness(self, q):
        return 3.0 * q * q - 1.0

    def check_level(self, f, separatrix=False):
        if f == -0.25:
            raise LevelSetError("duffing level -1/4 degenerates to the well bottoms (+-1, 0)")
        if f < -0.25:
            raise DomainError(f"duffing level must be >= -1/4, got {f}")
        if f == 0.0:
            if separatrix:
                return
            raise DomainError("duffing level 0 is the separatrix")
        if self.lobe == 'inner' and f > 0.0:
            raise DomainError(f"inner (one-well) duffing cycles need -1/4 < f < 0, got {f}")
        if self.lobe == 'outer' and f < 0.0 and not separatrix:
            raise DomainError(f"outer duffing cycles need f > 0, got {f}")

    def _outer_bracket(self, f):
        hi = 2.0
        while self.potential(hi) <= f:
            hi *= 2.0
        return math.sqrt(2.0), hi

    def turning_points(self, f, settings):
        self.check_level(f)
        if f < 0.0:
            inner = locate_turning_point(self.potential, self.force, f, 0.0, 1.0, settings.root_tol)
            outer = locate_turning_point(self.potential, self.force, f, 1.0, math.sqrt(2.0), settings.root_tol)
            return TurningPointSet([(inner, 0.0), (outer, 0.0)])
        lo, hi = self._outer_bracket(f)
        right = locate_turning_point(self.potential, self.force, f, lo, hi, settings.root_tol)
        return TurningPointSet([(-right, 0.0), (right, 0.0)])

    def excess(self, q, f):
        if f == 0.0:
            # separatrix: q^2 (2 - q^2) / 4
            root = math.sqrt(2.0)
            return 0.25 * q * q * (root - np.abs(q)) * (root + np.abs(q))
        return f - self.potential(q)

    def factored_excess(self, q, f, turning, to_left, to_right):
        (a, _), (b, _) = turning.points
        if f < 0.0:
            # (q^2 - q_-^2)(q_+^2 - q^2) / 4 on [q_-, q_+]
            return 0.25 * to_left * (q + a) * to_right * (b + q)
        # q_-^2 = -4f / q_+^2 is negative outside the wells; left = -q_+
        return 0.25 * (q * q + 4.0 * f / (b * b)) * to_left * to_right

    def segments(self, f, settings):
        turning = self.turning_points(f, settings)
        (left, _), (right, _) = turning.points
        if f < 0.0:
            return [(left, right)], 2, turning
        # split at the saddle, where p is smallest
        return [(left, 0.0), (0.0, right)], 2, turning

    def separatrix_segments(self):
        root = math.sqrt(2.0)
        if self.lobe == 'inner':
            return [(0.0, root)], 2
        return [(-root, 0.0), (0.0, root)], 2

    def trace(self, f, settings, separatrix=False):
        self.check_level(f, separatrix=separatrix)
        if f == 0.0:
            right = self._separatrix_lobe(settings)
            left = -right
            return LevelCurve([left, right], [True, True], 0.0)

        (a, _), (b, _) = self.turning_points(f, settings).points
        branch = self._closed_from_upper(self._upper_arc(a, b, f, settings))
        if f < 0.0:
            # both wells carry a cycle; the mirror well comes first (leftmost)
            return LevelCurve([-branch, branch], [True, True], f)
        return LevelCurve([branch], [True], f)

    def _separatrix_lobe(self, settings):
        root = math.sqrt(2.0)
        delta = 0.25 * settings.max_step
        start = np.array([delta, float(self.momentum(delta, 0.0))])
        end = np.array([root, 0.0])

        def stop(previous, candidate):
            if candidate[1] < 0.0 or candidate[0] >= root:
                return end
            return None

        upper = self._march(start, 0.0, settings, stop)
        upper = np.vstack([[0.0, 0.0], upper])
        return self._closed_from_upper(upper)


class PendulumPortrait(MechanicalPortrait):
    """h = p^2/2 - cos q shifted so that f = E - 1; inner = libration, outer = rotation"""

    name = 'pendulum'
    saddles = (-math.pi, math.pi)

    def potential(self, q):
        c = np.cos(0.5 * q)
        return -2.0 * c * c

    def force(self, q):
        return np.sin(q)

    def stiffness(self, q):
        return np.cos(q)

    def check_level(self, f, separatrix=False):
        if f == -2.0:
            raise LevelSetError("pendulum level -2 degenerates to the stable equilibrium (0, 0)")
        if f < -2.0:
            raise DomainError(f"pendulum level must be >= -2, got {f}")
        if f == 0.0:
            if separatrix:
                return
            raise DomainError("pendulum level 0 is the separatrix")
        if self.lobe == 'inner' and f > 0.0:
            raise DomainError(f"libration cycles need -2 < f < 0, got {f}")
        if self.lobe == 'outer' and f < 0.0:
            raise DomainError(f"rotation cycles need f > 0, got {f}")

    def turning_points(self, f, settings):
        self.check_level(f)
        if f > 0.0:
            # rotations have no turning points; the branch ends are the cut q = +-pi
            p_end = float(self.momentum(math.pi, f))
            return TurningPointSet([(-math.pi, p_end), (math.pi, p_end)])
        q0 = math.pi - self.saddle_gap(f)
        return TurningPointSet([(-q0, 0.0), (q0, 0.0)])

    @staticmethod
    def saddle_gap(f):
        """pi - q0 for a libration level f = -2 sin^2((pi - q0)/2)"""
        return 2.0 * math.asin(math.sqrt(-0.5 * f))

    def _integrate_reflected(self, f, settings, kernel):
        """
        integral of kernel(p^2) over r = pi - q in [pi - q0, pi] (libration)
        or [0, pi] (rotation); with W = -2 sin^2(r/2) the saddle sits at r = 0,
        so the turning point is a segment end and r - (pi - q0) is exact
        """
        self.check_level(f)
        if f < 0.0:
            delta = self.saddle_gap(f)
            # p^2 = 4 sin^2(r/2) - 4 sin^2(delta/2) = 4 sin((r - delta)/2) sin((r + delta)/2)
            integrand = lambda r, to_a, to_b: kernel(4.0 * np.sin(0.5 * to_a) * np.sin(0.5 * to_a + delta))
            half = integrate_tanh_sinh(integrand, delta, math.pi, settings.quad_tol, settings.max_levels, distances=True)
            # four quarter arcs of the libration cycle
            return 4.0 * half
        integrand = lambda r, to_a, to_b: kernel(2.0 * f + 4.0 * np.sin(0.5 * to_a) ** 2)
        half = integrate_tanh_sinh(integrand, 0.0, math.pi, settings.quad_tol, settings.max_levels, distances=True)
        # upper branch over q in [-pi, pi]
        return 2.0 * half

    def loop_action(self, f, settings):
        return self._integrate_reflected(f, settings, lambda p2: np.sqrt(np.maximum(p2, 0.0)))

    def period(self, f, settings):
        with np.errstate(divide='ignore', invalid='ignore'):
            return self._integrate_reflected(f, settings, lambda p2: 1.0 / np.sqrt(p2))

    def separatrix_segments(self):
        return [(-math.pi, 0.0), (0.0, math.pi)], (2 if self.lobe == 'inner' else 1)

    def trace(self, f, settings, separatrix=False):
        self.check_level(f, separatrix=separatrix)
        if f == 0.0:
            delta = 0.25 * settings.max_step
            start = np.array([-math.pi + delta, float(self.momentum(-math.pi + delta, 0.0))])
            end = np.array([math.pi, 0.0])

            def stop(previous, candidate):
                return end if candidate[0] >= math.pi - delta else None

            upper = np.vstack([[-math.pi, 0.0], self._march(start, 0.0, settings, stop)])
            return LevelCurve([self._closed_from_upper(upper)], [True], 0.0)

        if f < 0.0:
            (a, _), (b, _) = self.turning_points(f, settings).points
            return LevelCurve([self._closed_from_upper(self._upper_arc(a, b, f, settings))], [True], f)

        p_end = float(self.momentum(math.pi, f))
        end = np.array([math.pi, p_end])

        def stop(previous, candidate):
            return end if candidate[0] >= math.pi else None

        upper = self._march(np.array([-math.pi, p_end]), f, settings, stop)
        # rotations close on the cylinder, not in the plane
        return LevelCurve([-upper, upper], [False, False], f)


class HarmonicPortrait(MechanicalPortrait):
    """isochronous oscillator h = (p^2 + q^2)/2; no separatrix, test oracle only"""

    name = 'harmonic'

    def potential(self, q):
        return 0.5 * q * q

    def force(self, q):
        return q

    def stiffness(self, q):
        return np.ones_like(q) if isinstance(q, np.ndarray) else 1.0

    def check_level(self, f, separatrix=False):
        if f == 0.0:
            raise LevelSetError("harmonic level 0 degenerates to the origin")
        if f < 0.0:
            raise DomainError(f"harmonic level must be positive, got {f}")

    def turning_points(self, f, settings):
        self.check_level(f)
        q0 = locate_turning_point(self.potential, self.force, f, 0.0, 2.0 * math.sqrt(2.0 * f) + 1.0, settings.root_tol)
        return TurningPointSet([(-q0, 0.0), (q0, 0.0)])

    def factored_excess(self, q, f, turning, to_left, to_right):
        # (q0^2 - q^2) / 2 with left = -q0
        return 0.5 * to_left * to_right

    def segments(self, f, settings):
        turning = self.turning_points(f, settings)
        (left, _), (right, _) = turning.points
        return [(left, 0.0), (0.0, right)], 2, turning

    def separatrix_segments(self):
        raise DomainError("the harmonic oscillator has no separatrix")

    def trace(self, f, settings, separatrix=False):
        self.check_level(f)
        (a, _), (b, _) = self.turning_points(f, settings).points
        return LevelCurve([self._closed_from_upper(self._upper_arc(a, b, f, settings))], [True], f)


class SaddleChartPortrait(PhasePortrait):
    """
    h = pq restricted to the chart [-eps, eps]^2

    the singular action is the chart-relative area between pq = f and the
    separatrix (the axes) in the first quadrant:
    A(f) = f + integral of (f/q) dq over [f/eps, eps] = -f ln f + f (1 + 2 ln eps)
    """

    name = 'saddle-chart'

    def __init__(self, epsilon, lobe='outer'):
        super().__init__(lobe)
        self.epsilon = epsilon

    def value(self, q, p):
        return q * p

    def gradient(self, q, p):
        return p, q

    def hessian(self, q, p):
        return (0.0, 1.0), (1.0, 0.0)

    def check_level(self, f, separatrix=False):
        if f == 0.0:
            if separatrix:
                return
            raise DomainError("saddle-chart level 0 is the separatrix")
        if not (0.0 < f <= self.epsilon ** 2):
            raise DomainError(f"saddle-chart level must lie in (0, eps^2] = (0, {self.epsilon ** 2}], got {f}")

    def turning_points(self, f, settings):
        self.check_level(f)
        eps = self.epsilon
        return TurningPointSet([(f / eps, eps), (eps, f / eps)])

    def loop_action(self, f, settings):
        self.check_level(f)
        # p dq = (f/q) dq integrates to f ln(eps^2 / f) in closed form
        return f * (1.0 + 2.0 * math.log(self.epsilon) - math.log(f))

    def period(self, f, settings):
        self.check_level(f)
        # dq / |dh/dp| = dq / q over [f/eps, eps]
        return 2.0 * math.log(self.epsilon) - math.log(f)

    def separatrix_area(self, settings):
        # chart-relative: the region between pq = f and the axes shrinks to zero area
        return 0.0

    def trace(self, f, settings, separatrix=False):
        self.check_level(f, separatrix=separatrix)
        eps = self.epsilon
        if f == 0.0:
            count = max(2, int(math.ceil(eps / settings.max_step)) + 1)
            ray = np.linspace(0.0, eps, count)
            zeros = np.zeros_like(ray)
            branches = [
                np.column_stack([-ray[::-1], zeros]),
                np.column_stack([zeros, -ray[::-1]]),
                np.column_stack([zeros, ray]),
                np.column_stack([ray, zeros]),
            ]
            return LevelCurve(branches, [False] * 4, 0.0)

        def stop(previous, candidate):
            if abs(candidate[0]) > eps or abs(candidate[1]) > eps:
                sign = 1.0 if candidate[0] > 0 else -1.0
                return np.array([sign * eps, sign * f / eps])
            return None

        first = self._march(np.array([f / eps, eps]), f, settings, stop)
        third = self._march(np.array([-f / eps, -eps]), f, settings, stop)
        return LevelCurve([third, first], [False, False], f)


def portrait_for_factor(kind, params, lobe):
    """portrait of a catalog factor kind"""
    if kind == 'saddle-chart':
        return SaddleChartPortrait(params['epsilon'], lobe)
    if kind == 'duffing-double-well':
        return DuffingPortrait(lobe)
    if kind == 'pendulum':
        return PendulumPortrait(lobe)
    raise DomainError(f"no phase portrait for factor kind '{kind}'")


def _portrait(factor):
    if isinstance(factor, PhasePortrait):
        return factor
    return factor.portrait()


def trace_level_curve(factor, f, settings=None, separatrix=False):
    """
    trace the level set {h = f} of a factor

    args:
        factor: HyperbolicFactor or PhasePortrait
        f: native level value
        settings: Settings (max_step, trace_tol, angle_step)
        separatrix: allow f = 0 and trace the singular level

    returns:
        LevelCurve with branches ordered by leftmost point
    """
    settings = settings or load_settings()
    curve = _portrait(factor).trace(f, settings, separatrix=separatrix)
    order = sorted(range(len(curve.branches)), key=lambda i: (curve.branches[i][:, 0].min(), curve.branches[i][:, 1].min()))
    return LevelCurve([curve.branches[i] for i in order], [curve.closed[i] for i in order], curve.f_value)


def turning_points(factor, f, settings=None):
    settings = settings or load_settings()
    return _portrait(factor).turning_points(f, settings)


def loop_action_integral(factor, f, settings=None):
    """
    integral of p dq over the selected cycle at native level f (no 1/2pi)

    args:
        factor: HyperbolicFactor or PhasePortrait
        f: native level value on the factor's lobe

    returns:
        float
    """
    settings = settings or load_settings()
    return _portrait(factor).loop_action(f, settings)


def period_integral(factor, f, settings=None):
    """
    integral of dq / |dh/dp| over the selected cycle, the derivative of the
    loop action with respect to f
    """
    settings = settings or load_settings()
    return _portrait(factor).period(f, settings)


def separatrix_area(factor, settings=None):
    """
    limit of the loop action as f -> 0 on the selected lobe

    the saddle chart has no compact separatrix lobe; its chart-relative area tends to 0
    """
    settings = settings or load_settings()
    return _portrait(factor).separatrix_area(settings)
