"""Five-stage, fourth-order low-storage Runge-Kutta and the CFL time step."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .physics import Constants, NonPhysicalState


@dataclass(frozen=True)
class LsrkScheme:
    """Two-register scheme ``k <- A k + dt f(q); q <- q + B k``."""

    a: tuple
    b: tuple
    c: tuple

    @property
    def stages(self):
        return len(self.a)

    def coefficients(self, dtype):
        t = np.dtype(dtype).type
        return tuple(t(x) for x in self.a), tuple(t(x) for x in self.b)


def stage_times(a, b):
    """Time reached by each stage input, from ``y' = 1``."""
    t, k, c = 0.0, 0.0, []
    for ai, bi in zip(a, b):
        c.append(t)
        k = ai * k + 1.0
        t += bi * k
    return tuple(c)


# Carpenter & Kennedy (1994), solution 3. The stage times follow from a and b;
# the rational quoted for c_3 in the literature disagrees with them by 4e-8.
_A = (0.0,
      float(Fraction(-567301805773, 1357537059087)),
      float(Fraction(-2404267990393, 2016746695238)),
      float(Fraction(-3550918686646, 2091501179385)),
      float(Fraction(-1275806237668, 842570457699)))
_B = (float(Fraction(1432997174477, 9575080441755)),
      float(Fraction(5161836677717, 13612068292357)),
      float(Fraction(1720146321549, 2090206949498)),
      float(Fraction(3134564353537, 4481467310338)),
      float(Fraction(2277821191437, 14882151754819)))
CARPENTER_KENNEDY_54 = LsrkScheme(a=_A, b=_B, c=stage_times(_A, _B))


class LowStorageRK:
    """Integrator owning the second register ``k``.

    ``rhs(q, out)`` must write the tendency into ``out``; ``rhs_evaluations``
    counts its calls. Besides ``k`` the integrator keeps one tendency buffer,
    the output slot of ``rhs``, and reuses it as scratch so that a step
    allocates nothing.
    """

    def __init__(self, rhs, state_like, scheme=CARPENTER_KENNEDY_54):
        self.rhs = rhs
        self.scheme = scheme
        self.dtype = np.asarray(state_like).dtype
        self.k = np.zeros_like(state_like)
        self.tend = np.zeros_like(state_like)
        self.a, self.b = scheme.coefficients(self.dtype)
        self.rhs_evaluations = 0

    def step(self, q, dt):
        """Advance ``q`` in place by ``dt``."""
        dt = self.dtype.type(dt)
        k, tend = self.k, self.tend
        k[...] = 0
        for stage in range(self.scheme.stages):
            try:
                self.rhs(q, tend)
            except NonPhysicalState as err:
                err.stage = stage + 1
                raise
            self.rhs_evaluations += 1
            # in place: the tendency buffer doubles as scratch, nothing is allocated
            tend *= dt
            k *= self.a[stage]
            k += tend
            np.multiply(k, self.b[stage], out=tend)
            q += tend
        return q


def lsrk_step(q, rhs, dt, scheme=CARPENTER_KENNEDY_54):
    """Single step on a copy of ``q`` with a throwaway integrator."""
    q = np.array(q, copy=True)
    def wrapped(x, out):
        out[...] = rhs(x)
    return LowStorageRK(wrapped, q, scheme).step(q, dt)


def node_spacing(ref):
    """Smallest distance to an adjacent node on the reference line, per node."""
    gaps = np.diff(np.asarray(ref.nodes, dtype=np.float64))
    left = np.concatenate([[np.inf], gaps])
    right = np.concatenate([gaps, [np.inf]])
    return np.minimum(left, right)


def compute_dt(q, phi, mesh, ref, courant, constants=Constants()):
    """``C * min(dx / (|u_d| + c))`` over nodes and directions, in 64-bit."""
    q = np.asarray(q, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    rho = q[:, 0]
    u = q[:, 1:4] / rho[:, None]
    p = (constants.gamma - 1.0) * (q[:, 4] - 0.5 * rho * np.sum(u * u, axis=1) - rho * phi)
    bad = ~((rho > 0) & (p > 0))
    if np.any(bad):
        e, *node = np.argwhere(bad)[0]
        raise NonPhysicalState("non-physical state in time-step estimate", element=int(e), node=tuple(node[::-1]))
    c = np.sqrt(constants.gamma * p / rho)
    gap = node_spacing(ref)
    best = np.inf
    shapes = {0: (1, 1, -1), 1: (1, -1, 1), 2: (-1, 1, 1)}
    for d in range(3):
        dx = 0.5 * mesh.spacing[d] * gap.reshape(shapes[d])
        rate = (np.abs(u[:, d]) + c) / dx
        best = min(best, 1.0 / rate.max())
    return courant * best
