"""Compiled pointwise helpers shared by the volume and surface kernels.

Kernels never use float literals: numba types a literal as float64 and would
silently promote 32-bit arithmetic. Every constant comes from the tuple
returned by :func:`kernel_constants`, built in the working precision.
"""

import math

import numpy as np
from numba import njit

from ..physics import series_threshold

JIT = dict(cache=True, nogil=True, error_model="numpy")

# constant tuple slots
HALF, ONE, TWO, GAMMA, GM1, INV2GM1, XI2_SWITCH, LOG2, ZERO, INV2G, GM1_G, INVGM1 = range(12)
NSERIES = 7
SERIES = 12  # 1/3, 1/5, ..., 1/15 (zero past the precision's truncation)
ODD = SERIES + NSERIES  # 3, 5, ..., 15
MASK = ODD + NSERIES  # 1 for retained series terms, else 0

# auxiliary field slots
RHO, U0, U1, U2, P, B, INVB, LRHO, LB, PHI = range(10)
NAUX = 10

# operation counter slots
FLUX, LOGS, DIVS, SURFACE, RHS_CALLS, SQRTS = range(6)
NCOUNTERS = 6
COUNTER_NAMES = ("flux_evals", "log_evals", "div_evals", "surface_evals", "rhs_calls", "sqrt_evals")


def kernel_constants(constants, dtype):
    t = np.dtype(dtype).type
    thr, terms = series_threshold(dtype)
    g = constants.gamma
    values = [0.5, 1.0, 2.0, g, g - 1.0, 1.0 / (2.0 * (g - 1.0)), thr * thr, math.log(2.0), 0.0,
              1.0 / (2.0 * g), (g - 1.0) / g, 1.0 / (g - 1.0)]
    ks = range(1, NSERIES + 1)
    values += [1.0 / (2 * k + 1) if k <= terms else 0.0 for k in ks]
    values += [float(2 * k + 1) for k in ks]
    values += [1.0 if k <= terms else 0.0 for k in ks]
    return tuple(t(v) for v in values)


@njit(inline="always")
def _series(x2, K):
    # 1 + x2/3 + x2^2/5 + ... by Horner's rule
    acc = K[SERIES + NSERIES - 1]
    for k in range(NSERIES - 2, -1, -1):
        acc = K[SERIES + k] + x2 * acc
    return K[ONE] + x2 * acc


@njit(inline="always")
def _series_naive(x2, K):
    # the same sum term by term, one division per term
    ser = K[ONE]
    pw = K[ONE]
    for k in range(NSERIES):
        pw = pw * x2
        ser = ser + pw / K[ODD + k] * K[MASK + k]
    return ser


@njit(inline="always")
def node_aux(r, m0, m1, m2, e, phi, K):
    """Primitive and logarithmic auxiliaries of one node (2 divisions, 2 logs)."""
    inv_r = K[ONE] / r
    u0 = m0 * inv_r
    u1 = m1 * inv_r
    u2 = m2 * inv_r
    p = K[GM1] * (e - K[HALF] * (m0 * u0 + m1 * u1 + m2 * u2) - r * phi)
    b = K[HALF] * r / p
    invb = K[TWO] * p * inv_r
    return u0, u1, u2, p, b, invb, math.log(r), math.log(b)


@njit(inline="always")
def ln_mean(a, b, la, lb, K):
    """Logarithmic mean from precomputed logs; series in xi^2 via Horner."""
    d = b - a
    s = a + b
    x2 = (d * d) / (s * s)
    small = x2 < K[XI2_SWITCH]
    ser = K[TWO] * _series(x2, K)
    num = s if small else d
    den = ser if small else lb - la
    return num / den


@njit(inline="always")
def inv_ln_mean(a, b, la, lb, K):
    """Reciprocal of :func:`ln_mean` without a second division."""
    d = b - a
    s = a + b
    x2 = (d * d) / (s * s)
    small = x2 < K[XI2_SWITCH]
    ser = K[TWO] * _series(x2, K)
    num = ser if small else lb - la
    den = s if small else d
    return num / den


@njit(inline="always")
def ln_mean_naive(a, b, la, lb, K):
    """Same mean written without the division-saving rewrites.

    Both branches are evaluated and one is selected, so the loop stays
    vectorizable. Returns the mean and the number of divisions performed.
    """
    xi = (b - a) / (a + b)
    x2 = xi * xi
    near = K[HALF] * (a + b) / _series_naive(x2, K)
    far = (b - a) / (lb - la)
    return (near if x2 < K[XI2_SWITCH] else far), 3 + NSERIES


@njit(inline="always")
def ln_mean_classic(a, b, K):
    """Log mean evaluating ``log(b/a)`` per call.

    Returns the mean, divisions and logarithms performed.
    """
    zeta = b / a
    f = (zeta - K[ONE]) / (zeta + K[ONE])
    u = f * f
    if u < K[XI2_SWITCH]:
        return (a + b) / (K[TWO] * _series_naive(u, K)), 3 + NSERIES, 0
    big_f = math.log(zeta) / (K[TWO] * f)
    return (a + b) / (K[TWO] * big_f), 4, 1
