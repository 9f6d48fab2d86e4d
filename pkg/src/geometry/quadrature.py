"""
tanh-sinh (double exponential) quadrature
handles algebraic and logarithmic endpoint singularities, so loop integrals
can be split at turning points and integrated piece by piece
"""

import logging
import math
import sys

import numpy as np

from common.errors import QuadratureError

logger = logging.getLogger(__name__)

_HALF_PI = math.pi / 2.0
_EPS = sys.float_info.epsilon

# nodes beyond |t| = T_MAX carry weights below double precision
T_MAX = 4.0


def _level_nodes(h, odd_only):
    """abscissae t of one refinement level"""
    count = int(T_MAX / h)
    j = np.arange(-count, count + 1)
    if odd_only:
        j = j[j % 2 != 0]
    return j * h


def _map_nodes(t, a, b, distances=False):
    """
    map t to points x of [a, b], the weights dx/dt and the endpoint
    distances (x - a, b - x)

    the distance to the nearer endpoint comes straight from the map, so an
    integrand written in terms of the distances keeps full relative accuracy
    where x itself rounds onto the endpoint
    """
    half = 0.5 * (b - a)
    s = _HALF_PI * np.sinh(t)
    gap = half * 2.0 / (np.exp(2.0 * np.abs(s)) + 1.0)
    x = np.where(t > 0, b - gap, a + gap)
    x = np.where(t == 0, 0.5 * (a + b), x)
    to_a = np.where(t > 0, (b - a) - gap, gap)
    to_b = np.where(t > 0, gap, (b - a) - gap)
    w = half * _HALF_PI * np.cosh(t) / np.cosh(s) ** 2

    if distances:
        keep = (gap > 0) & (w > 0)
    else:
        keep = (x > a) & (x < b) & (w > 0)
    return x[keep], w[keep], to_a[keep], to_b[keep]


def _evaluate(integrand, x, to_a, to_b, distances):
    values = integrand(x, to_a, to_b) if distances else integrand(x)
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        where = x[bad][0]
        raise QuadratureError(f"integrand is not finite at {int(bad.sum())} nodes (first at x = {where!r})")
    return values


def tanh_sinh(integrand, a, b, tol=1e-13, max_levels=14, distances=False):
    """
    integrate with level doubling until two successive levels agree

    args:
        integrand: vectorized callable on numpy arrays, f(x) or, with
            distances=True, f(x, |x - a|, |b - x|)
        a, b: finite limits
        tol: absolute tolerance
        max_levels: number of step halvings before giving up
        distances: pass exact endpoint distances to the integrand

    returns:
        dict with 'value', 'error' (last level difference), 'levels', 'nodes'
    """
    if a == b:
        return {'value': 0.0, 'error': 0.0, 'levels': 0, 'nodes': 0}
    if a > b:
        if distances:
            flipped = lambda x, to_b, to_a: integrand(x, to_a, to_b)
        else:
            flipped = integrand
        result = tanh_sinh(flipped, b, a, tol, max_levels, distances)
        result['value'] = -result['value']
        return result

    h = 0.5
    nodes = 0
    x, w, to_a, to_b = _map_nodes(_level_nodes(h, odd_only=False), a, b, distances)
    terms = w * _evaluate(integrand, x, to_a, to_b, distances)
    nodes += x.size
    estimate = h * terms.sum()
    magnitude = h * np.abs(terms).sum()

    previous = None
    for level in range(1, max_levels + 1):
        h *= 0.5
        x, w, to_a, to_b = _map_nodes(_level_nodes(h, odd_only=True), a, b, distances)
        terms = w * _evaluate(integrand, x, to_a, to_b, distances)
        nodes += x.size

        previous = estimate
        estimate = 0.5 * previous + h * terms.sum()
        magnitude = 0.5 * magnitude + h * np.abs(terms).sum()

        diff = abs(estimate - previous)
        if level >= 2 and diff <= max(tol, 16 * _EPS * magnitude):
            return {'value': float(estimate), 'error': float(diff), 'levels': level, 'nodes': nodes}

    raise QuadratureError(
        f"tanh-sinh did not converge on [{a}, {b}] after {max_levels} levels "
        f"(last estimates {previous!r}, {estimate!r})",
        estimates=(float(previous), float(estimate)),
    )


def integrate_tanh_sinh(integrand, a, b, tol=1e-13, max_levels=14, distances=False):
    """
    value of the integral of integrand over [a, b]

    args:
        integrand: vectorized callable, see tanh_sinh
        a, b: limits
        tol: absolute tolerance
        max_levels: refinement cap
        distances: integrand takes (x, |x - a|, |b - x|)

    returns:
        float
    """
    return tanh_sinh(integrand, a, b, tol, max_levels, distances)['value']


def integrate_segments(integrand, segments, tol=1e-13, max_levels=14, distances=False):
    """
    sum of tanh-sinh integrals over consecutive segments

    args:
        integrand: vectorized callable; with distances=True it is called as
            integrand(x, |x - a|, |b - x|, segment) so it can tell which
            endpoints are turning points
        segments: list of (a, b) pieces, split at turning and critical points
        tol: absolute tolerance per piece

    returns:
        float
    """
    total = 0.0
    for a, b in segments:
        if distances:
            piece = lambda x, to_a, to_b, a=a, b=b: integrand(x, to_a, to_b, (a, b))
        else:
            piece = integrand
        total += integrate_tanh_sinh(piece, a, b, tol, max_levels, distances)
    return total
