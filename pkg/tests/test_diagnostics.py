import numpy as np
import pytest

from conftest import make_mesh
from esdg import build_reference_element
from esdg.cases import constant_state, smooth_random_state
from esdg.diagnostics import (
    TDP_WATTS, ConservationMonitor, EquivalenceError, PerfRecord, conservation_report, energy_estimate,
    flux_scale, format_real, gate_state, integrate, kernel_model, ladder_benchmark, perf_record,
    quadrature_weights, ratios, read_csv, ridge_point, roofline_record, throughput_row, write_csv,
)
from esdg.kernels import LADDER, LocalOperator
from esdg.time_integration import LowStorageRK

# (devices, A100 seconds, Milan seconds, A100 MJ, Milan MJ, R_time, R_energy) as printed
TABLE = [
    (4, 110, 1241, 0.18, 2.78, 11.28, 15.79),
    (8, 60, 593, 0.19, 2.66, 9.88, 13.84),
    (16, 30, 322, 0.19, 2.89, 10.73, 15.03),
]


@pytest.mark.parametrize("row", TABLE)
def test_energy_table_recomputes(row):
    n, t_gpu, t_cpu, e_gpu, e_cpu, r_t, r_e = row
    gpu = (t_gpu, energy_estimate(t_gpu, TDP_WATTS["A100"], n))
    cpu = (t_cpu, energy_estimate(t_cpu, TDP_WATTS["Milan-2S"], n))
    assert gpu[1] == pytest.approx(e_gpu, rel=0.03)
    assert cpu[1] == pytest.approx(e_cpu, rel=0.03)
    rt, re_ = ratios(cpu, gpu)
    assert rt == pytest.approx(r_t, rel=0.03)
    assert re_ == pytest.approx(r_e, rel=0.03)


def test_energy_first_row_exact():
    assert energy_estimate(110, 400, 4) == pytest.approx(0.176, rel=1e-12)
    assert energy_estimate(1241, 560, 4) == pytest.approx(2.77984, rel=1e-12)
    with pytest.raises(ValueError):
        energy_estimate(0, 400)


def test_quadrature_weights_integrate_volume_and_polynomials():
    mesh = make_mesh(1, lo=(0.0, 0.0, 0.0), hi=(2.0, 3.0, 5.0))
    ref = build_reference_element(3)
    w = quadrature_weights(mesh, ref)
    assert w.sum() == pytest.approx(30.0, rel=1e-14)
    x = mesh.node_coordinates(ref)
    # degree 5 per direction is exact with 4 Lobatto points
    f = x[:, 0] ** 5 * x[:, 2] ** 2
    assert integrate(f, w) == pytest.approx(2.0**6 / 6 * 3.0 * 5.0**3 / 3, rel=1e-13)


def test_conservation_report_and_zero_drift():
    mesh = make_mesh(1)
    ref = build_reference_element(3)
    q, phi = smooth_random_state(mesh, ref, np.random.default_rng(2))
    mon = ConservationMonitor(mesh, ref)
    mon.record(0, 0.0, q)
    op = LocalOperator(mesh, ref, phi)
    integ = LowStorageRK(op, q)
    for n in range(1, 4):
        integ.step(q, 0.02)
        mon.record(n, 0.02 * n, q)
    rep = mon.report()
    assert rep.mass_drift[0] == 0.0
    assert rep.max_mass_drift < 1e-14 and rep.max_energy_drift < 1e-14
    assert len(rep.rows()) == 4
    with pytest.raises(ValueError):
        conservation_report([(0, 0.0, 1.0, 1.0)])


def test_conservation_drift_detects_a_change():
    rep = conservation_report([(0, 0.0, 2.0, 10.0), (1, 1.0, 2.0 + 2e-6, 10.0)])
    assert rep.max_mass_drift == pytest.approx(1e-6)
    assert rep.max_energy_drift == 0.0


def _record():
    return PerfRecord({"volume": 3.0, "surface": 1.0, "update": 0.5}, {}, {"volume": 6e9, "surface": 1e9, "update": 1e8},
                      {"volume": 1e9, "surface": 1e9, "update": 1e9}, element_steps=900)


def test_shares_sum_to_one_and_throughput():
    p = _record()
    assert sum(p.shares.values()) == pytest.approx(1.0, abs=1e-15)
    assert p.throughput == pytest.approx(200.0)
    row = throughput_row(p)
    assert row[:3] == (900, 4.5, 200.0)
    assert sum(row[3:]) == pytest.approx(1.0)


def test_roofline_branches():
    p = _record()
    assert ridge_point(100.0, 10.0) == 10.0
    # volume: ai 6 < ridge 10 -> bandwidth roof 60 GF/s; achieved 2 GF/s
    k, ai, gf, frac = roofline_record(p, "volume", 100.0, 10.0)
    assert (k, ai, gf) == ("volume", 6.0, 2.0) and frac == pytest.approx(2.0 / 60.0)
    # compute roof once ai exceeds the ridge
    _, _, _, frac = roofline_record(p, "volume", 100.0, 1000.0)
    assert frac == pytest.approx(2.0 / 100.0)
    for bad in [(0.0, 10.0), (10.0, -1.0)]:
        with pytest.raises(ValueError):
            roofline_record(p, "volume", *bad)


def test_kernel_model_scales_with_counters():
    counters = {"flux_evals": 1000, "rhs_calls": 1, "surface_evals": 10, "div_evals": 0, "log_evals": 0}
    f1, b1 = kernel_model(counters, "balanced", 8, 5, np.float64, 1)
    f2, b2 = kernel_model(dict(counters, flux_evals=2000), "balanced", 8, 5, np.float64, 1)
    assert f2["volume"] - f1["volume"] == 1000 * (95 + 20)
    _, b32 = kernel_model(counters, "balanced", 8, 5, np.float32, 1)
    assert b32["volume"] * 2 == b1["volume"]


def test_perf_record_folds_timers():
    p = perf_record({"aux": 1.0, "volume": 2.0, "surface": 0.5, "commit": 0.25, "update": 0.25},
                    {"flux_evals": 10, "rhs_calls": 5}, "balanced", 8, 5, np.float32, 2)
    assert p.times == {"volume": 3.0, "surface": 0.75, "update": 0.25}
    assert p.element_steps == 16 and p.dtype == "float32"


def test_format_real_round_trips():
    x = 0.1 + 0.2
    s = format_real(x)
    assert float(s) == x and len(s.split("e")[0].replace(".", "").lstrip("-")) == 17
    s32 = format_real(np.float32(1 / 3), 32)
    assert np.float32(float(s32)) == np.float32(1 / 3)
    assert format_real(7) == "7"
    assert format_real(float("nan")) == "nan"


def test_csv_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    vals = [(1, np.pi, "a"), (2, -1e-300, "b")]
    write_csv(path, ("n", "x", "s"), vals)
    back = read_csv(path)
    assert [float(r["x"]) for r in back] == [np.pi, -1e-300]
    assert [r["s"] for r in back] == ["a", "b"]


def test_flux_scale_vanishes_at_rest_and_gate_state_keeps_density_and_pressure():
    mesh = make_mesh(1)
    ref = build_reference_element(2)
    q = constant_state(mesh, ref, u=(0.0, 0.0, 0.0))
    phi = np.zeros(q[:, 0].shape)
    assert flux_scale(q, phi, mesh)[0] == 0.0
    g = gate_state(q, phi, speed=5.0)
    np.testing.assert_array_equal(g[:, 0], q[:, 0])
    p = 0.4 * (g[:, 4] - 0.5 * np.sum(g[:, 1:4] ** 2, axis=1) / g[:, 0])
    np.testing.assert_allclose(p, 1e5, rtol=1e-13)
    assert np.all(flux_scale(g, phi, mesh) > 0)


def test_ladder_benchmark_rows_and_gate():
    mesh = make_mesh(1)
    ref = build_reference_element(3)
    q, phi = smooth_random_state(mesh, ref, np.random.default_rng(4))
    ticks = iter(range(10**6))
    rows = ladder_benchmark(mesh, ref, q, phi, repeats=5, warmups=2, clock=lambda: float(next(ticks)))
    assert [r.variant for r in rows] == [v.value for v in LADDER]
    assert all(r.time_s == 1.0 and r.speedup == 1.0 and len(r.samples) == 5 for r in rows)
    assert rows[4].flux_evals * 2 == rows[0].flux_evals
    with pytest.raises(EquivalenceError):
        ladder_benchmark(mesh, ref, q, phi, repeats=5, warmups=2, tolerance=1e-20)
    with pytest.raises(ValueError):
        ladder_benchmark(mesh, ref, q, phi, repeats=3)
