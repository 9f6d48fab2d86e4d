"""
complete elliptic integrals by the arithmetic-geometric mean
plus the pendulum action/period closed forms built on them
"""

import math

from common.errors import DomainError

_AGM_TOL = 1e-16
_AGM_MAX_ITER = 64


def elliptic_KE(k):
    """
    complete elliptic integrals of the first and second kind, modulus k

    K = pi / (2 agm(1, k')), E = K (1 - sum 2^(n-1) c_n^2) with c_0 = k

    args:
        k: modulus in [0, 1)

    returns:
        (K, E)
    """
    if not (0.0 <= k < 1.0):
        raise DomainError(f"elliptic K needs 0 <= k < 1, got {k}")

    a = 1.0
    b = math.sqrt((1.0 - k) * (1.0 + k))
    c = k
    total = 0.5 * c * c
    power = 0.5
    for _ in range(_AGM_MAX_ITER):
        if abs(c) <= _AGM_TOL * a:
            break
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        power *= 2.0
        total += power * c * c

    K = math.pi / (2.0 * a)
    return K, K * (1.0 - total)


def elliptic_K(k):
    return elliptic_KE(k)[0]


def elliptic_E(k):
    """complete integral of the second kind, defined up to k = 1"""
    if k == 1.0:
        return 1.0
    if not (0.0 <= k < 1.0):
        raise DomainError(f"elliptic E needs 0 <= k <= 1, got {k}")
    return elliptic_KE(k)[1]


def pendulum_action(f, lobe):
    """
    closed-form loop action of H = p^2/2 - cos q at level f = E - 1

    args:
        f: native level, -2 < f < 0 for libration (inner), f > 0 for rotation (outer)
        lobe: 'inner' or 'outer'

    returns:
        integral of p dq over the cycle
    """
    if lobe == 'inner':
        if not (-2.0 < f < 0.0):
            raise DomainError(f"libration needs -2 < f < 0, got {f}")
        k = math.sqrt(1.0 + 0.5 * f)
        K, E = elliptic_KE(k)
        return 16.0 * (E - (1.0 - k * k) * K)

    if f <= 0.0:
        raise DomainError(f"rotation needs f > 0, got {f}")
    k = math.sqrt(2.0 / (f + 2.0))
    return 4.0 * math.sqrt(2.0 * (f + 2.0)) * elliptic_E(k)


def pendulum_period(f, lobe):
    """closed-form period matching pendulum_action (its derivative in f)"""
    if lobe == 'inner':
        if not (-2.0 < f < 0.0):
            raise DomainError(f"libration needs -2 < f < 0, got {f}")
        return 4.0 * elliptic_K(math.sqrt(1.0 + 0.5 * f))

    if f <= 0.0:
        raise DomainError(f"rotation needs f > 0, got {f}")
    k = math.sqrt(2.0 / (f + 2.0))
    return 2.0 * k * elliptic_K(k)
