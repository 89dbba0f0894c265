"""Initial conditions: hydrostatic background, rising bubble and test states."""

from enum import Enum

import numpy as np

from .physics import Constants

THETA0 = 300.0
BUBBLE_CENTER = (0.0, 0.0, 260.0)
BUBBLE_RADIUS = 250.0
BUBBLE_AMPLITUDE = 0.5


class BubbleKind(str, Enum):
    SHARP = "sharp"
    SMOOTH = "smooth"


def exner(z, constants=Constants(), theta0=THETA0):
    pi = 1.0 - constants.g * np.asarray(z, dtype=np.float64) / (constants.cp * theta0)
    if np.any(pi <= 0.0):
        raise ValueError("height above the top of the isentropic atmosphere (Exner pressure <= 0)")
    return pi


def hydrostatic_background(z, constants=Constants(), theta0=THETA0):
    """Isentropic atmosphere at rest: returns ``(rho, p, T)``."""
    pi = exner(z, constants, theta0)
    temp = theta0 * pi
    p = constants.p0 * pi ** (constants.cp / constants.R)
    return p / (constants.R * temp), p, temp


def bubble_perturbation(x, y, z, kind=BubbleKind.SHARP, center=BUBBLE_CENTER, radius=BUBBLE_RADIUS,
                        amplitude=BUBBLE_AMPLITUDE):
    """Potential temperature perturbation in kelvin."""
    r = np.sqrt((np.asarray(x) - center[0]) ** 2 + (np.asarray(y) - center[1]) ** 2
                + (np.asarray(z) - center[2]) ** 2)
    if BubbleKind(kind) is BubbleKind.SHARP:
        return np.where(r <= radius, amplitude, 0.0)
    smooth = amplitude * 0.5 * (1.0 + np.cos(np.pi * r / radius))
    return np.where(r <= radius, smooth, 0.0)


def pack_state(rho, u, p, phi, constants=Constants()):
    """Conservative state ``(ne, 5, nq, nq, nq)`` from primitives."""
    rho = np.asarray(rho, dtype=np.float64)
    q = np.empty((rho.shape[0], 5) + rho.shape[1:])
    q[:, 0] = rho
    for m in range(3):
        q[:, 1 + m] = rho * u[m]
    kinetic = 0.5 * rho * sum(np.asarray(c) ** 2 for c in u)
    q[:, 4] = p / (constants.gamma - 1.0) + kinetic + rho * phi
    return q


def rising_bubble(mesh, ref, kind=BubbleKind.SHARP, constants=Constants(), theta0=THETA0, elements=None):
    """Warm bubble at constant pressure on the hydrostatic background.

    ``elements`` (a slice) builds the state of a block of elements only.
    """
    xyz = mesh.node_coordinates(ref, elements)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    _, p, _ = hydrostatic_background(z, constants, theta0)
    theta = theta0 + bubble_perturbation(x, y, z, kind)
    temp = theta * (p / constants.p0) ** (constants.R / constants.cp)
    rho = p / (constants.R * temp)
    zero = np.zeros_like(rho)
    return pack_state(rho, (zero, zero, zero), p, constants.g * z, constants)


def constant_state(mesh, ref, rho=1.2, u=(10.0, -3.0, 2.0), p=1.0e5, constants=Constants()):
    shape = (mesh.num_elements,) + (ref.nq,) * 3
    ones = np.ones(shape)
    return pack_state(rho * ones, tuple(c * ones for c in u), p * ones, 0.0, constants)


def smooth_random_state(mesh, ref, rng, constants=Constants(), amplitude=1.0, gravity=True):
    """Periodic smooth perturbation of a uniform state with random phases."""
    xyz = mesh.node_coordinates(ref)
    lo = np.asarray(mesh.config.lo, dtype=np.float64)
    length = np.asarray(mesh.config.hi, dtype=np.float64) - lo
    k = [2.0 * np.pi * (xyz[:, a] - lo[a]) / length[a] for a in range(3)]

    def wave():
        ph = rng.uniform(0.0, 2.0 * np.pi, size=3)
        return np.sin(k[0] + ph[0]) * np.cos(k[1] + ph[1]) * np.sin(k[2] + ph[2])

    rho = 1.0 + 0.1 * amplitude * wave()
    u = tuple(5.0 * amplitude * wave() for _ in range(3))
    p = 1.0e5 * (1.0 + 0.02 * amplitude * wave())
    phi = constants.g * xyz[:, 2] if gravity else np.zeros_like(rho)
    return pack_state(rho, u, p, phi, constants), phi


def potential_temperature(q, phi, constants=Constants()):
    rho = q[:, 0]
    p = (constants.gamma - 1.0) * (q[:, 4] - 0.5 * (q[:, 1] ** 2 + q[:, 2] ** 2 + q[:, 3] ** 2) / rho - rho * phi)
    temp = p / (rho * constants.R)
    return temp * (constants.p0 / p) ** (constants.R / constants.cp)


class MissingInitialState(RuntimeError):
    """The case has no built-in initial state."""


def baroclinic_channel(*_args, **_kwargs):
    raise MissingInitialState(
        "the baroclinic channel ships as a domain/Coriolis skeleton only; its balanced initial "
        "state is not defined here, supply one through an initial-state plugin")
