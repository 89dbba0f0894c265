from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esdg.physics import (
    Constants, Coriolis, NonPhysicalState, analytic_flux, avg, ec_two_point_flux, entropy,
    entropy_variables, jump, log_mean, matrix_dissipation, mirror_state, partner_flux, pressure,
    primitive_aux, series_threshold, source_term, surface_flux,
)

C = Constants()


def random_states(rng, n, gravity=True, speed=50.0):
    rho = rng.uniform(0.5, 1.5, n)
    u = rng.uniform(-speed, speed, (3, n))
    p = rng.uniform(5e4, 1.5e5, n)
    phi = rng.uniform(0.0, 2e4, n) if gravity else np.zeros(n)
    q = np.empty((5, n))
    q[0] = rho
    q[1:4] = rho * u
    q[4] = p / (C.gamma - 1) + 0.5 * rho * (u * u).sum(0) + rho * phi
    return q, phi


def decimal_log_mean(a, b):
    getcontext().prec = 50
    a, b = Decimal(float(a)), Decimal(float(b))
    if a == b:
        return float(a)
    return float((b - a) / (b.ln() - a.ln()))


@pytest.mark.parametrize("ratio", [1.0, 1 + 1e-12, 1 + 1e-8, 1 + 1e-5, 1.01, 1.2, 1.2222, 1.23, 2.0, 10.0, 1e3])
def test_log_mean_against_high_precision(ratio):
    a = 0.7
    b = a * ratio
    got = log_mean(np.float64(a), np.float64(b), np.log(a), np.log(b))
    ref = decimal_log_mean(a, b)
    assert abs(got - ref) <= 4e-16 * ref


@pytest.mark.parametrize("ratio", [1.0, 1 + 1e-6, 1 + 1e-3, 1.1, 1.3, 3.0])
def test_log_mean_32bit_within_a_few_ulp(ratio):
    a = np.float32(0.7)
    b = np.float32(0.7 * ratio)
    got = log_mean(a, b, np.log(a), np.log(b))
    assert got.dtype == np.float32
    ref = decimal_log_mean(a, b)
    assert abs(float(got) - ref) <= 4 * np.finfo(np.float32).eps * ref


def test_series_threshold_choice():
    assert series_threshold(np.float64) == (1e-1, 7)
    assert series_threshold(np.float32) == (1e-1, 3)
    # first dropped term stays below half an ulp at the switch point
    assert 0.1**16 / 17 < 0.5 * np.finfo(np.float64).eps
    assert 0.1**8 / 9 < 0.5 * np.finfo(np.float32).eps


@settings(max_examples=200, deadline=None)
@given(a=st.floats(1e-3, 1e3), b=st.floats(1e-3, 1e3))
def test_log_mean_properties(a, b):
    m = float(log_mean(np.float64(a), np.float64(b), np.log(a), np.log(b)))
    assert m == pytest.approx(float(log_mean(np.float64(b), np.float64(a), np.log(b), np.log(a))), rel=1e-15)
    tol = 1e-14 * max(a, b)
    assert np.sqrt(a * b) - tol <= m <= 0.5 * (a + b) + tol


def test_avg_jump():
    assert avg(1.0, 3.0) == 2.0
    assert jump(1.0, 3.0) == 2.0


def test_pressure_and_nonphysical_detection():
    q = np.array([1.0, 0.0, 0.0, 0.0, 2.5e5])
    assert pressure(q, 0.0) == pytest.approx(1e5)
    with pytest.raises(NonPhysicalState):
        pressure(np.array([1.0, 0.0, 0.0, 0.0, -1.0]), 0.0)
    with pytest.raises(NonPhysicalState):
        primitive_aux(np.array([-1.0, 0.0, 0.0, 0.0, 1.0]), 0.0)


@pytest.mark.parametrize("axis", range(3))
def test_consistency_with_the_physical_flux(rng, axis):
    q, phi = random_states(rng, 50)
    f = ec_two_point_flux(q, q, phi, phi, axis).flux()
    np.testing.assert_allclose(f, analytic_flux(q, phi, axis), rtol=1e-13, atol=1e-9)


@pytest.mark.parametrize("axis", range(3))
def test_symmetric_part_and_partner_scaling(rng, axis):
    qa, pa = random_states(rng, 40)
    qb, pb = random_states(rng, 40)
    ab = ec_two_point_flux(qa, qb, pa, pb, axis)
    ba = ec_two_point_flux(qb, qa, pb, pa, axis)
    np.testing.assert_allclose(ab.symmetric, ba.symmetric, rtol=1e-14)
    # the gravity term is not antisymmetric: G -> -G b-/b+
    assert not np.allclose(ab.gravity, -ba.gravity)
    np.testing.assert_allclose(partner_flux(ab), ba.flux(), rtol=1e-13, atol=1e-9)


@pytest.mark.parametrize("axis", range(3))
def test_two_point_entropy_conservation(rng, axis):
    # v_a . F(a, b) - v_b . F(b, a) = psi_a - psi_b, with psi = rho u_axis
    qa, pa = random_states(rng, 100)
    qb, pb = random_states(rng, 100)
    r = ec_two_point_flux(qa, qb, pa, pb, axis)
    va, vb = entropy_variables(qa, pa), entropy_variables(qb, pb)
    lhs = (va * r.flux()).sum(0) - (vb * partner_flux(r)).sum(0)
    scale = np.abs(va * r.flux()).sum(0)
    assert np.max(np.abs(lhs - (qa[1 + axis] - qb[1 + axis])) / scale) < 1e-13


def test_entropy_variables_are_the_entropy_gradient(rng):
    q, phi = random_states(rng, 5)
    v = entropy_variables(q, phi)
    for k in range(5):
        h = 1e-6 * np.abs(q[k]).max()
        dq = np.zeros_like(q)
        dq[k] = h
        fd = (entropy(q + dq, phi) - entropy(q - dq, phi)) / (2 * h)
        np.testing.assert_allclose(v[k], fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("axis", range(3))
def test_matrix_dissipation_is_entropy_dissipative(rng, axis):
    qa, pa = random_states(rng, 300)
    qb, pb = random_states(rng, 300)
    d = matrix_dissipation(qa, qb, pa, pb, axis)
    dv = entropy_variables(qb, pb) - entropy_variables(qa, pa)
    assert np.all((dv * d).sum(0) >= -1e-9)
    np.testing.assert_allclose(matrix_dissipation(qa, qa, pa, pa, axis), 0.0, atol=1e-9)


@pytest.mark.parametrize("axis", range(3))
def test_surface_flux_is_conservative_across_a_face(rng, axis):
    qa, pa = random_states(rng, 30, gravity=False)
    qb, pb = random_states(rng, 30, gravity=False)
    n = np.eye(3)[axis]
    f_ab = surface_flux(qa, qb, pa, pb, n)
    f_ba = surface_flux(qb, qa, pb, pa, -n)
    np.testing.assert_allclose(f_ab, -f_ba, rtol=1e-12, atol=1e-8)


def test_mirror_state_negates_normal_momentum(rng):
    q, _ = random_states(rng, 3)
    m = mirror_state(q, 2)
    np.testing.assert_array_equal(m[3], -q[3])
    np.testing.assert_array_equal(m[[0, 1, 2, 4]], q[[0, 1, 2, 4]])
    # no mass through a wall
    f = ec_two_point_flux(q, m, 0.0, 0.0, 2).flux()
    np.testing.assert_allclose(f[0], 0.0, atol=1e-12)


def test_coriolis_source_does_no_work(rng):
    q, _ = random_states(rng, 20)
    cor = Coriolis(1e-4, 1.6e-11, 3e6)
    y = rng.uniform(0, 6e6, 20)
    h = source_term(q, cor, y)
    u = q[1:4] / q[0]
    np.testing.assert_allclose((h[1:4] * u).sum(0), 0.0, atol=1e-12)
    assert np.all(h[[0, 3, 4]] == 0)
    assert not source_term(q).any()


def test_constants_validation():
    with pytest.raises(ValueError):
        Constants(gamma=1.0)
    with pytest.raises(ValueError):
        Constants(R=0.0)
    assert Constants().cp == pytest.approx(1004.5)
