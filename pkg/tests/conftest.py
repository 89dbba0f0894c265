import numpy as np
import pytest

from esdg import Boundary, Constants, MeshConfig, build_mesh, build_reference_element
from esdg.cases import smooth_random_state
from esdg.physics import analytic_flux, ec_two_point_flux, matrix_dissipation, mirror_state, source_term

CRITERIA = {}  # acceptance result lines by criterion number


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])


P, R = Boundary.PERIODIC, Boundary.REFLECTING
BUBBLE_DOMAIN = dict(lo=(-1000.0, -1000.0, 0.0), hi=(1000.0, 1000.0, 2000.0), boundaries=(P, P, R))
CUBE = dict(lo=(0.0, 0.0, 0.0), hi=(1000.0, 1000.0, 1000.0))


def make_mesh(level=1, base=(1, 1, 1), **domain):
    return build_mesh(MeshConfig(base=base, level=level, **(domain or CUBE)))


def bubble_mesh(level):
    return make_mesh(level, **BUBBLE_DOMAIN)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_case():
    """Periodic 2^3 elements at N=3 with a moving, stratified state."""
    mesh = make_mesh(1)
    ref = build_reference_element(3)
    q, phi = smooth_random_state(mesh, ref, np.random.default_rng(7))
    return mesh, ref, q, phi


# Independent strong-form reference for the semi-discrete operator. It keeps
# the diagonal two-point flux F(q_i, q_i) = f(q_i) and the boundary correction
# (f* - f(q)) / w, evaluates every flux with the numpy physics routines and
# loops over directions without any of the kernels' staging or scheduling.

_NODE_AXIS = {0: 4, 1: 3, 2: 2}  # state axis holding nodes along each direction


def _lines(arr, d):
    """Put the nodes along direction ``d`` last: ``(ne, [5,] X, Y, nq)``."""
    return np.moveaxis(arr, _NODE_AXIS[d] - (0 if arr.ndim == 5 else 1), -1)


def reference_rhs(q, phi, mesh, ref, constants=Constants(), dissipation=True, coriolis=None):
    q = np.asarray(q, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    D = np.asarray(ref.diff_matrix, dtype=np.float64)
    w = np.asarray(ref.weights, dtype=np.float64)
    nq = ref.nq
    out = np.zeros_like(q)
    for d in range(3):
        ql = np.moveaxis(_lines(q, d), 1, 0)  # (5, ne, X, Y, nq)
        pl = _lines(phi, d)
        g = mesh.metric[:, d, d][None, :, None, None, None]
        vol = np.zeros_like(ql)
        for i in range(nq):
            for j in range(nq):
                f = ec_two_point_flux(ql[..., i], ql[..., j], pl[..., i], pl[..., j], d, constants).flux()
                vol[..., i] += 2.0 * D[i, j] * f
        # neighbour traces across the high and low faces
        hi_nb = mesh.neighbors[:, 2 * d + 1]
        lo_nb = mesh.neighbors[:, 2 * d]
        q_n, q_0 = ql[..., nq - 1], ql[..., 0]
        p_n, p_0 = pl[..., nq - 1], pl[..., 0]
        wall_hi = (hi_nb < 0)[None, :, None, None]
        wall_lo = (lo_nb < 0)[None, :, None, None]
        q_hi = np.where(wall_hi, mirror_state(q_n, d), np.take(ql, hi_nb, axis=1)[..., 0])
        p_hi = np.where(wall_hi[0], p_n, pl[hi_nb, ..., 0])
        q_lo = np.where(wall_lo, mirror_state(q_0, d), np.take(ql, lo_nb, axis=1)[..., nq - 1])
        p_lo = np.where(wall_lo[0], p_0, pl[lo_nb, ..., nq - 1])
        f_hi = ec_two_point_flux(q_n, q_hi, p_n, p_hi, d, constants).flux()
        f_lo = ec_two_point_flux(q_0, q_lo, p_0, p_lo, d, constants).flux()
        if dissipation:
            f_hi = f_hi - matrix_dissipation(q_n, q_hi, p_n, p_hi, d, constants)
            f_lo = f_lo - matrix_dissipation(q_lo, q_0, p_lo, p_0, d, constants)
        vol[..., nq - 1] += (f_hi - analytic_flux(q_n, p_n, d, constants)) / w[-1]
        vol[..., 0] -= (f_lo - analytic_flux(q_0, p_0, d, constants)) / w[0]
        tend = -g * vol
        out += np.moveaxis(np.moveaxis(tend, 0, 1), -1, _NODE_AXIS[d])
    if coriolis is not None:
        y = mesh.node_coordinates(ref)[:, 1]
        out += np.moveaxis(source_term(np.moveaxis(q, 1, 0), coriolis, y), 0, 1)
    return out
