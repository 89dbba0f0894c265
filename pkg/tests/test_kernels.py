import re

import numpy as np
import pytest
from numba import njit

from conftest import BUBBLE_DOMAIN, make_mesh, reference_rhs
from esdg import build_reference_element
from esdg.cases import BubbleKind, constant_state, rising_bubble, smooth_random_state
from esdg.diagnostics import entropy_monitor, flux_scale, quadrature_weights, total_entropy
from esdg.kernels import LADDER, KernelVariant, LocalOperator, VolumeKernel, assemble_rhs, volume
from esdg.kernels.surface import surface_kernel
from esdg.physics import Constants, Coriolis, NonPhysicalState, analytic_flux

C = Constants()
WALLS = dict(lo=(0.0, 0.0, 0.0), hi=(1000.0, 800.0, 1200.0), boundaries=("periodic", "reflecting", "reflecting"))


def scaled_error(a, b, q, phi, mesh):
    scale = flux_scale(q, phi, mesh)
    err = np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64))
    return float(np.max(np.moveaxis(err, 1, -1).reshape(-1, 5).max(axis=0) / scale))


@pytest.fixture(scope="module")
def wall_case():
    mesh = make_mesh(1, base=(1, 2, 1), **WALLS)
    ref = build_reference_element(4)
    q, phi = smooth_random_state(mesh, ref, np.random.default_rng(3))
    return mesh, ref, q, phi


@pytest.mark.parametrize("dissipation", [False, True])
@pytest.mark.parametrize("variant", LADDER)
def test_periodic_operator_matches_reference(small_case, variant, dissipation):
    mesh, ref, q, phi = small_case
    got = assemble_rhs(variant, q, mesh, ref, phi, dissipation=dissipation)
    want = reference_rhs(q, phi, mesh, ref, dissipation=dissipation)
    # entropy-variable jumps are ill-conditioned (v1 is a difference of large
    # terms), so the dissipative flux carries a few hundred ulps of rounding
    assert scaled_error(got, want, q, phi, mesh) < (1e-12 if dissipation else 1e-13)


@pytest.mark.parametrize("variant", ["baseline", "precompute", "balanced"])
def test_walls_and_rotation_match_reference(wall_case, variant):
    mesh, ref, q, phi = wall_case
    cor = Coriolis(1e-4, 1.6e-11, 400.0)
    got = assemble_rhs(variant, q, mesh, ref, phi, coriolis=cor, dissipation=True)
    want = reference_rhs(q, phi, mesh, ref, dissipation=True, coriolis=cor)
    assert scaled_error(got, want, q, phi, mesh) < 1e-12


@pytest.mark.parametrize("contravariant", [False, True])
@pytest.mark.parametrize("variant", LADDER[2:])
def test_contravariant_toggle_is_exact_up_to_rounding(small_case, variant, contravariant):
    mesh, ref, q, phi = small_case
    k = VolumeKernel(variant, mesh, ref, C, contravariant=contravariant)
    base = VolumeKernel("baseline", mesh, ref, C)
    assert scaled_error(k(q, phi), base(q, phi), q, phi, mesh) < 1e-13


@pytest.mark.parametrize("N", [2, 3, 4])
def test_ladder_variants_agree(N):
    mesh = make_mesh(1)
    ref = build_reference_element(N)
    rng = np.random.default_rng(N)
    q, phi = smooth_random_state(mesh, ref, rng, amplitude=2.0)
    outs = [VolumeKernel(v, mesh, ref, C)(q, phi) for v in LADDER]
    for v, o in zip(LADDER[1:], outs[1:]):
        assert scaled_error(o, outs[0], q, phi, mesh) < 1e-13, v


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_flux_counters(N):
    mesh = make_mesh(1)
    ref = build_reference_element(N)
    q, phi = smooth_random_state(mesh, ref, np.random.default_rng(0))
    nq, ne = ref.nq, mesh.num_elements
    counts = {}
    for v in LADDER:
        k = VolumeKernel(v, mesh, ref, C)
        k(q, phi)
        counts[v] = k.counters.copy()
        assert int(k.counters[0]) == k.evaluations_per_rhs(ne)
    lines = 3 * ne * nq * nq
    assert int(counts[KernelVariant.BASELINE][0]) == lines * nq * (nq - 1)
    if nq % 2:
        assert 2 * int(counts[KernelVariant.SYMMETRIC][0]) == int(counts[KernelVariant.BASELINE][0])
    assert int(counts[KernelVariant.BALANCED][0]) == lines * nq * (nq // 2)
    # logarithms only in the per-node precompute from the precompute stage on
    for v in LADDER[2:]:
        assert int(counts[v][1]) == 2 * ne * nq**3


def test_baseline_takes_logs_inside_the_flux():
    # a strongly varying density pushes pairs past the series switch point
    mesh = make_mesh(1)
    ref = build_reference_element(3)
    q, phi = smooth_random_state(mesh, ref, np.random.default_rng(0), amplitude=8.0)
    base = VolumeKernel("baseline", mesh, ref, C)
    pre = VolumeKernel("precompute", mesh, ref, C)
    base(q, phi)
    pre(q, phi)
    assert int(base.counters[1]) > int(pre.counters[1]) == 2 * mesh.num_elements * ref.nq**3


def test_free_stream_preservation():
    mesh = make_mesh(1)
    ref = build_reference_element(4)
    q = constant_state(mesh, ref)
    phi = np.zeros(q[:, 0].shape)
    scale = max(np.abs(analytic_flux(np.moveaxis(q, 1, 0), phi, d)).max() * mesh.metric[0, d, d] for d in range(3))
    for v in LADDER:
        rhs = assemble_rhs(v, q, mesh, ref, phi)
        assert np.abs(rhs).max() <= 1e-13 * scale, v


@pytest.mark.parametrize("variant", ["baseline", "logmean", "balanced"])
def test_entropy_conservation_with_gravity(variant):
    mesh = make_mesh(1)
    ref = build_reference_element(4)
    q, phi = smooth_random_state(mesh, ref, np.random.default_rng(11))
    w = quadrature_weights(mesh, ref)
    rhs = assemble_rhs(variant, q, mesh, ref, phi, dissipation=False)
    prod = entropy_monitor(q, rhs, phi, w)
    assert abs(prod) <= 1e-10 * abs(total_entropy(q, phi, w))


def test_dissipation_produces_no_entropy_on_bubble():
    mesh = make_mesh(1, **BUBBLE_DOMAIN)
    ref = build_reference_element(4)
    phi = mesh.geopotential(ref, C.g)
    q = rising_bubble(mesh, ref, BubbleKind.SHARP)
    q[:, 1:4] += 5.0 * q[:, :1] * np.random.default_rng(1).standard_normal(q[:, 1:4].shape)
    w = quadrature_weights(mesh, ref)
    op = LocalOperator(mesh, ref, phi, dissipation=True)
    assert entropy_monitor(q, op(q), phi, w) <= 1e-12


def test_single_precision_tracks_double(small_case):
    mesh, ref, q, phi = small_case
    r64 = assemble_rhs("balanced", q, mesh, ref, phi)
    r32 = assemble_rhs("balanced", q.astype(np.float32), mesh, ref, phi.astype(np.float32))
    assert r32.dtype == np.float32
    assert scaled_error(r32, r64, q, phi, mesh) < 1e-4


def test_nonphysical_state_reports_location(small_case):
    mesh, ref, q, phi = small_case
    bad = q.copy()
    bad[5, 0, 1, 2, 3] = -1.0
    for v in ("baseline", "balanced"):
        with pytest.raises(NonPhysicalState) as info:
            assemble_rhs(v, bad, mesh, ref, phi)
        assert info.value.element == 5
        assert tuple(info.value.node) == (3, 2, 1)


def test_variant_rejects_mismatched_schedule(small_case):
    from esdg.kernels import ScheduleKind, build_schedule
    mesh, ref, _, _ = small_case
    with pytest.raises(ValueError):
        VolumeKernel("balanced", mesh, ref, C, schedule=build_schedule(ref.nq, ScheduleKind.FULL))
    with pytest.raises(ValueError):
        VolumeKernel("logmean", mesh, ref, C, schedule=build_schedule(ref.nq, ScheduleKind.UPPER))


# widening or arithmetic in double; numba's own shape checks compare integer
# sizes as doubles, which touches no field data and is not matched here
_DOUBLE_MATH = re.compile(r"\b(fadd|fsub|fmul|fdiv|fneg)\b[^\n]*\bdouble\b|\bfpext\b|@llvm\.[\w.]*\.f64\b")


def _fresh_ir(dispatcher, *args):
    # the cached dispatcher cannot be inspected; recompile the source uncached
    fresh = njit(nogil=True, error_model="numpy")(dispatcher.py_func)
    fresh(*args)
    return list(fresh.inspect_llvm().values())[0]


def test_single_precision_kernels_do_no_double_arithmetic(small_case):
    mesh, ref, q, phi = small_case
    q32, p32 = q.astype(np.float32), phi.astype(np.float32)
    op = LocalOperator(mesh, ref, p32, dtype=np.float32)
    op(q32)
    k = op.volume
    ir = _fresh_ir(volume.compute_aux, q32, p32, op.aux, k.K, k.counters)
    assert not _DOUBLE_MATH.findall(ir)
    out = np.empty_like(q32)
    ir = _fresh_ir(volume.volume_kernel, k.mode, k.fused, k.contravariant, op.aux, p32, k.metric, k.D2, k.pi, k.pj,
                   k.pw, out, k.K, k.counters, k.batch, k.W, k.Gl, k.S, k.O)
    assert not _DOUBLE_MATH.findall(ir)
    ft = op.local_faces
    ir = _fresh_ir(surface_kernel, op.traces, op.ghost_aux, ft.left, ft.right, ft.axis, op.lift, op.K, True,
                   op.face_buf, op.counters)
    assert not _DOUBLE_MATH.findall(ir)


def test_double_arithmetic_pattern_detects_the_64_bit_build(small_case):
    mesh, ref, q, phi = small_case
    op = LocalOperator(mesh, ref, phi)
    op(q)
    assert _DOUBLE_MATH.findall(_fresh_ir(volume.compute_aux, q, phi, op.aux, op.volume.K, op.volume.counters))
