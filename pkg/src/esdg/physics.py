"""Pointwise and two-point physics of the Euler equations with gravity.

States are arrays whose leading axis holds the five conservative variables
``(rho, rho*u, rho*v, rho*w, E)``; any trailing axes broadcast. ``E`` is the
total energy density including the potential energy ``rho * phi``.

These numpy routines are the readable reference for the compiled kernels in
:mod:`esdg.kernels` and are what the tests compare those kernels against.
"""

from dataclasses import dataclass

import numpy as np


class NonPhysicalState(ArithmeticError):
    """Density or pressure became non-positive (or NaN)."""

    def __init__(self, message, element=None, node=None, stage=None):
        super().__init__(message)
        self.element = element
        self.node = node
        self.stage = stage

    def __str__(self):
        where = []
        if self.element is not None:
            where.append(f"element={self.element}")
        if self.node is not None:
            where.append(f"node={self.node}")
        if self.stage is not None:
            where.append(f"stage={self.stage}")
        base = super().__str__()
        return f"{base} ({', '.join(where)})" if where else base


@dataclass(frozen=True)
class Constants:
    gamma: float = 1.4
    R: float = 287.0
    p0: float = 1.0e5
    g: float = 9.81

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError("gamma must exceed 1")
        if not self.R > 0.0:
            raise ValueError("gas constant must be positive")

    @property
    def cv(self):
        return self.R / (self.gamma - 1.0)

    @property
    def cp(self):
        return self.gamma * self.cv


@dataclass(frozen=True)
class Coriolis:
    """Rotation ``Omega = (0, 0, f)`` with ``f(y) = f0 + beta * (y - y0)``."""

    f0: float = 0.0
    beta: float = 0.0
    y0: float = 0.0

    @property
    def active(self):
        return self.f0 != 0.0 or self.beta != 0.0

    def parameter(self, y):
        return self.f0 + self.beta * (np.asarray(y) - self.y0)


def _check(rho, p):
    bad = ~((rho > 0) & (p > 0))
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise NonPhysicalState(
            f"non-physical state: rho={np.atleast_1d(rho)[tuple(idx)]!r}, p={np.atleast_1d(p)[tuple(idx)]!r}",
            node=tuple(int(i) for i in idx),
        )


def pressure(q, phi, constants=Constants(), check=True):
    q = np.asarray(q)
    rho = q[0]
    p = (constants.gamma - 1.0) * (q[4] - 0.5 * (q[1] ** 2 + q[2] ** 2 + q[3] ** 2) / rho - rho * phi)
    if check:
        _check(rho, p)
    return p


def avg(a_minus, a_plus):
    return 0.5 * (a_plus + a_minus)


def jump(a_minus, a_plus):
    return a_plus - a_minus


def series_threshold(dtype):
    """Switch point ``|xi|`` and number of series terms for ``log_mean``.

    The direct branch subtracts precomputed logs and loses about
    ``eps * |log a| / (2 |xi|)`` to cancellation, so the switch sits high and
    the series is long enough that its first dropped term stays below half an
    ulp there: ``xi^16 / 17`` in 64-bit, ``xi^8 / 9`` in 32-bit.
    """
    if np.dtype(dtype) == np.float32:
        return 1e-1, 3
    return 1e-1, 7


def log_mean(a_minus, a_plus, log_a_minus, log_a_plus):
    """Logarithmic mean from precomputed logarithms.

    Near ``a_minus == a_plus`` a truncated series in
    ``xi = (a+ - a-) / (a+ + a-)`` replaces the 0/0 quotient.
    """
    a_minus, a_plus = np.asarray(a_minus), np.asarray(a_plus)
    dtype = np.result_type(a_minus, a_plus)
    thr, terms = series_threshold(dtype)
    one = dtype.type(1)
    diff = a_plus - a_minus
    total = a_plus + a_minus
    xi2 = (diff * diff) / (total * total)
    coeffs = [dtype.type(1.0 / (2 * k + 1)) for k in range(1, terms + 1)]
    series = dtype.type(0)
    for c in reversed(coeffs):
        series = xi2 * (c + series)
    small = xi2 < dtype.type(thr) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = diff / (np.asarray(log_a_plus) - np.asarray(log_a_minus))
    return np.where(small, dtype.type(0.5) * total / (one + series), direct)


@dataclass
class PrimitiveAux:
    rho: np.ndarray
    u: np.ndarray  # (3, ...)
    p: np.ndarray
    b: np.ndarray
    log_rho: np.ndarray
    log_b: np.ndarray


def primitive_aux(q, phi, constants=Constants()):
    q = np.asarray(q)
    p = pressure(q, phi, constants)
    rho = q[0]
    b = rho / (2.0 * p)
    return PrimitiveAux(rho, q[1:4] / rho, p, b, np.log(rho), np.log(b))


def analytic_flux(q, phi, axis, constants=Constants()):
    """Flux of the conservation-law part of the equations along ``axis``."""
    q = np.asarray(q)
    p = pressure(q, phi, constants)
    uk = q[1 + axis] / q[0]
    out = np.empty_like(q, dtype=np.result_type(q, p))
    out[0] = q[1 + axis]
    out[1:4] = q[1:4] * uk
    out[1 + axis] += p
    out[4] = (q[4] + p) * uk
    return out


@dataclass
class TwoPointFluxResult:
    """Entropy-conservative flux split as symmetric part plus gravity term.

    ``symmetric`` is unchanged under swapping the two states. ``gravity`` is
    added to the momentum component along ``axis``. ``scale`` is
    ``b_minus / b_plus``, which maps this gravity term onto the swapped one.
    """

    symmetric: np.ndarray
    gravity: np.ndarray
    scale: np.ndarray
    axis: int

    def flux(self):
        out = self.symmetric.copy()
        out[1 + self.axis] = out[1 + self.axis] + self.gravity
        return out


def ec_two_point_flux(q_minus, q_plus, phi_minus, phi_plus, axis, constants=Constants(),
                      aux_minus=None, aux_plus=None):
    if aux_minus is None:
        aux_minus = primitive_aux(q_minus, phi_minus, constants)
    if aux_plus is None:
        aux_plus = primitive_aux(q_plus, phi_plus, constants)
    am, ap = aux_minus, aux_plus
    rho_ln = log_mean(am.rho, ap.rho, am.log_rho, ap.log_rho)
    b_ln = log_mean(am.b, ap.b, am.log_b, ap.log_b)
    b_avg = avg(am.b, ap.b)
    p_star = avg(am.rho, ap.rho) / (2.0 * b_avg)
    u_avg = avg(am.u, ap.u)
    mass = rho_ln * u_avg[axis]
    sym = np.empty((5,) + np.shape(mass), dtype=np.result_type(mass, p_star))
    sym[0] = mass
    sym[1:4] = mass * u_avg
    sym[1 + axis] += p_star
    uu = 0.5 * np.sum(am.u * ap.u, axis=0)
    sym[4] = mass * (1.0 / (2.0 * (constants.gamma - 1.0) * b_ln) + uu + avg(phi_minus, phi_plus)) \
        + p_star * u_avg[axis]
    rho_hat = b_avg * rho_ln / am.b
    gravity = 0.5 * rho_hat * jump(phi_minus, phi_plus)
    return TwoPointFluxResult(sym, gravity, am.b / ap.b, axis)


def partner_flux(result):
    """Flux the swapped evaluation would return, without re-evaluating it."""
    out = result.symmetric.copy()
    out[1 + result.axis] = out[1 + result.axis] - result.gravity * result.scale
    return out


def entropy(q, phi, constants=Constants()):
    q = np.asarray(q)
    p = pressure(q, phi, constants)
    s = np.log(p) - constants.gamma * np.log(q[0])
    return -q[0] * s / (constants.gamma - 1.0)


def entropy_variables(q, phi, constants=Constants()):
    q = np.asarray(q)
    gam = constants.gamma
    p = pressure(q, phi, constants)
    rho = q[0]
    u = q[1:4] / rho
    s = np.log(p) - gam * np.log(rho)
    b = rho / (2.0 * p)
    v = np.empty(q.shape, dtype=np.result_type(q, p))
    v[0] = (gam - s) / (gam - 1.0) - b * (np.sum(u * u, axis=0) - 2.0 * phi)
    v[1:4] = 2.0 * b * u
    v[4] = -2.0 * b
    return v


def mirror_state(q, axis):
    """Reflecting-wall ghost state: normal momentum negated."""
    out = np.array(q, copy=True)
    out[1 + axis] = -out[1 + axis]
    return out


def matrix_dissipation(q_minus, q_plus, phi_minus, phi_plus, axis, constants=Constants()):
    """Roe-type dissipation ``1/2 R|L|Z R^T [[v]]`` in entropy-scaled eigenvectors.

    The eigenvectors belong to the flux Jacobian at a log-mean averaged state.
    The geopotential enters through the congruence that moves ``rho*phi``
    into the energy, so ``[[v]] . result >= 0`` for every pair of states.
    """
    gam = constants.gamma
    am = primitive_aux(q_minus, phi_minus, constants)
    ap = primitive_aux(q_plus, phi_plus, constants)
    rho_hat = log_mean(am.rho, ap.rho, am.log_rho, ap.log_rho)
    u_hat = avg(am.u, ap.u)
    b_avg = avg(am.b, ap.b)
    p_hat = avg(am.rho, ap.rho) / (2.0 * b_avg)
    phi_bar = avg(phi_minus, phi_plus)
    c_hat = np.sqrt(gam * p_hat / rho_hat)
    kin = 0.5 * np.sum(u_hat * u_hat, axis=0)
    h_hat = c_hat**2 / (gam - 1.0) + kin

    # [[v]] with the potential energy folded out of the energy variable
    def v_tilde(a):
        s = np.log(a.p) - gam * a.log_rho
        return np.stack([(gam - s) / (gam - 1.0) - a.b * np.sum(a.u * a.u, axis=0),
                         2 * a.b * a.u[0], 2 * a.b * a.u[1], 2 * a.b * a.u[2], -2 * a.b])

    w = v_tilde(ap) - v_tilde(am)
    w[0] = w[0] + 2.0 * b_avg * jump(phi_minus, phi_plus)

    un = u_hat[axis]
    zeros = np.zeros_like(un)
    ones = np.ones_like(un)
    e_n = [ones if m == axis else zeros for m in range(3)]
    tang = [m for m in range(3) if m != axis]
    vecs = [
        np.stack([ones, *(u_hat[m] - c_hat * e_n[m] for m in range(3)), h_hat - un * c_hat]),
        np.stack([ones, u_hat[0], u_hat[1], u_hat[2], kin]),
        np.stack([zeros, *(ones if m == tang[0] else zeros for m in range(3)), u_hat[tang[0]]]),
        np.stack([zeros, *(ones if m == tang[1] else zeros for m in range(3)), u_hat[tang[1]]]),
        np.stack([ones, *(u_hat[m] + c_hat * e_n[m] for m in range(3)), h_hat + un * c_hat]),
    ]
    lam = [np.abs(un - c_hat), np.abs(un), np.abs(un), np.abs(un), np.abs(un + c_hat)]
    scale = [rho_hat / (2 * gam), rho_hat * (gam - 1) / gam, p_hat, p_hat, rho_hat / (2 * gam)]
    out = sum(r * (lk * zk * np.sum(r * w, axis=0)) for r, lk, zk in zip(vecs, lam, scale))
    out[4] = out[4] + phi_bar * out[0]
    return 0.5 * out


def surface_flux(q_minus, q_plus, phi_minus, phi_plus, normal, constants=Constants(), dissipation=True):
    """Numerical flux through a face with outward unit normal ``normal``.

    ``normal`` is an axis-aligned unit vector. The result is the flux in the
    normal direction seen from the minus side, gravity term included.
    """
    normal = np.asarray(normal)
    axis = int(np.flatnonzero(normal)[0])
    sign = float(normal[axis])
    out = sign * ec_two_point_flux(q_minus, q_plus, phi_minus, phi_plus, axis, constants).flux()
    if dissipation:
        out = out - matrix_dissipation(q_minus, q_plus, phi_minus, phi_plus, axis, constants)
    return out


def source_term(q, coriolis=None, y=None):
    """Coriolis source ``-(Omega x U)`` with ``Omega = (0, 0, f)``; no energy source."""
    q = np.asarray(q)
    h = np.zeros_like(q)
    if coriolis is None or not coriolis.active:
        return h
    f = coriolis.parameter(0.0 if y is None else y)
    h[1] = f * q[2]
    h[2] = -f * q[1]
    return h
