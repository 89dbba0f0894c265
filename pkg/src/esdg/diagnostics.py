"""Conservation and entropy monitors, performance records and CSV output."""

import csv
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .kernels._pointwise import COUNTER_NAMES, NAUX
from .kernels.volume import _MODE, LADDER, KernelVariant, VolumeKernel, compute_aux
from .physics import Constants, analytic_flux, entropy, entropy_variables

# documentation defaults (A100 FP64 peak, HBM bandwidth, board power; dual-socket Milan node)
A100_PEAK_GFLOPS = 9746.0
A100_PEAK_GBYTES = 1560.0
TDP_WATTS = {"A100": 400.0, "Milan-2S": 560.0}


def quadrature_weights(mesh, ref):
    """``J w_a w_b w_c`` per element and node, shape ``(ne, nq, nq, nq)``."""
    w = np.asarray(ref.weights, dtype=np.float64)
    w3 = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return mesh.jacobian[:, None, None, None] * w3


def integrate(field_, weights):
    """Quadrature sum of a nodal field, accumulated in 64-bit."""
    return float(np.sum(np.asarray(field_, dtype=np.float64) * weights))


def totals(q, weights):
    """Total mass and total energy of a state."""
    return integrate(q[:, 0], weights), integrate(q[:, 4], weights)


@dataclass
class ConservationReport:
    steps: list
    times: list
    mass: list
    energy: list

    @property
    def mass_drift(self):
        return [abs(m - self.mass[0]) / abs(self.mass[0]) for m in self.mass]

    @property
    def energy_drift(self):
        return [abs(e - self.energy[0]) / abs(self.energy[0]) for e in self.energy]

    @property
    def max_mass_drift(self):
        return max(self.mass_drift)

    @property
    def max_energy_drift(self):
        return max(self.energy_drift)

    def rows(self):
        return list(zip(self.steps, self.times, self.mass, self.energy, self.mass_drift, self.energy_drift))


CONSERVATION_COLUMNS = ("step", "time", "total_mass", "total_energy", "mass_drift", "energy_drift")


def conservation_report(history):
    """Report from ``(step, time, mass, energy)`` samples."""
    history = list(history)
    if len(history) < 2:
        raise ValueError("a conservation report needs at least two samples")
    steps, times, mass, energy = (list(c) for c in zip(*history))
    return ConservationReport(steps, times, mass, energy)


class ConservationMonitor:
    def __init__(self, mesh, ref):
        self.weights = quadrature_weights(mesh, ref)
        self.history = []

    def record(self, step, t, q):
        m, e = totals(q, self.weights)
        self.history.append((step, t, m, e))

    def report(self):
        return conservation_report(self.history)


def entropy_monitor(q, rhs, phi, weights, constants=Constants()):
    """Semi-discrete entropy production ``sum J w^3 v(q) . dq/dt``."""
    qv = np.moveaxis(np.asarray(q, dtype=np.float64), 1, 0)
    v = entropy_variables(qv, np.asarray(phi, dtype=np.float64), constants)
    prod = np.einsum("vecba,evcba->ecba", v, np.asarray(rhs, dtype=np.float64))
    return float(np.sum(prod * weights))


def total_entropy(q, phi, weights, constants=Constants()):
    qv = np.moveaxis(np.asarray(q, dtype=np.float64), 1, 0)
    return integrate(entropy(qv, np.asarray(phi, dtype=np.float64), constants), weights)


ENTROPY_COLUMNS = ("step", "time", "total_entropy", "entropy_production")


def flux_scale(q, phi, mesh, constants=Constants()):
    """Per-variable ``max sum_d G_dd |f_d(q)|``, the size of a volume tendency term."""
    q = np.asarray(q, dtype=np.float64)
    qv = np.moveaxis(q, 1, 0)
    scale = 0.0
    for d in range(3):
        g = mesh.metric[:, d, d][None, :, None, None, None]
        scale = scale + g * np.abs(analytic_flux(qv, phi, d, constants))
    return scale.reshape(5, -1).max(axis=1)


# --- operation and traffic model -------------------------------------------

# add/mul count per operation, read off the kernel source; divisions, logs
# and square roots are counted separately by the kernels and added at weight 1
FLOPS_PER_FLUX = {0: 155, 1: 111, 2: 95, 3: 95}  # by flux family, means included
FLOPS_PER_ACCUMULATE = {0: 10, 1: 10, 2: 10, 3: 20}
FLOPS_PER_AUX_NODE = 14
FLOPS_PER_SURFACE_NODE = 150
FLOPS_PER_UPDATE_VALUE = 5  # k = a k + dt f; q += b k


@dataclass
class PerfRecord:
    """Timings, counters and the derived roofline quantities of a run."""

    times: dict
    counters: dict
    flops: dict
    bytes: dict
    element_steps: int
    dtype: str = "float64"

    @property
    def total_time(self):
        return sum(self.times.values())

    @property
    def shares(self):
        total = self.total_time
        if total <= 0:
            return {k: 1.0 / len(self.times) for k in self.times}
        return {k: v / total for k, v in self.times.items()}

    def arithmetic_intensity(self, kernel):
        return self.flops[kernel] / self.bytes[kernel]

    def gflops(self, kernel):
        t = self.times[kernel]
        return self.flops[kernel] / t / 1e9 if t > 0 else 0.0

    @property
    def throughput(self):
        """Element time steps per second."""
        total = self.total_time
        return self.element_steps / total if total > 0 else 0.0


def kernel_model(counters, variant, num_elements, nq, dtype, steps, stages=5, dissipation=True):
    """Closed-form flop and byte estimates from exact counters and the data model.

    Bytes are the naive state traffic: each kernel reads its inputs and
    reads and writes its outputs once per call, with no cache reuse.
    """
    mode = _MODE[KernelVariant(variant)]
    size = np.dtype(dtype).itemsize
    nodes = num_elements * nq**3
    calls = int(counters.get("rhs_calls", 0))
    flux = counters.get("flux_evals", 0)
    surf = counters.get("surface_evals", 0)
    special = counters.get("div_evals", 0) + counters.get("log_evals", 0) + counters.get("sqrt_evals", 0)
    surf_special = surf * (7 if dissipation else 5)
    aux = FLOPS_PER_AUX_NODE * nodes * calls if mode > 0 else 0
    flops = {
        "volume": flux * (FLOPS_PER_FLUX[mode] + FLOPS_PER_ACCUMULATE[mode]) + aux + special - surf_special,
        "surface": surf * FLOPS_PER_SURFACE_NODE + surf_special,
        "update": FLOPS_PER_UPDATE_VALUE * 5 * nodes * steps * stages,
    }
    inputs = 6 if mode == 0 else 5 + 1 + NAUX
    face_nodes = 6 * num_elements * nq**2
    nbytes = {
        "volume": calls * size * (nodes * (inputs + 2 * 5) + 9 * num_elements + nq * nq),
        "surface": calls * size * face_nodes * (NAUX + 5 + 2 * 5),
        "update": steps * stages * size * nodes * 5 * 5,
    }
    return flops, nbytes


def perf_record(timers, counters, variant, num_elements, nq, dtype, steps, stages=5, dissipation=True):
    """Fold operator timers into volume / surface / update shares."""
    times = {
        "volume": timers.get("aux", 0.0) + timers.get("volume", 0.0),
        "surface": timers.get("surface", 0.0) + timers.get("commit", 0.0),
        "update": timers.get("update", 0.0),
    }
    flops, nbytes = kernel_model(counters, variant, num_elements, nq, dtype, steps, stages, dissipation)
    return PerfRecord(times, dict(counters), flops, nbytes, num_elements * steps, np.dtype(dtype).name)


ROOFLINE_COLUMNS = ("kernel", "ai", "gflops", "fraction_of_roof")
THROUGHPUT_COLUMNS = ("element_steps", "seconds", "element_steps_per_second", "volume_share",
                      "surface_share", "update_share")


def roofline_record(perf, kernel, peak_gflops, peak_gbytes):
    """``(kernel, ai, gflops, fraction)`` with ``fraction = gflops / min(peak, ai * bw)``."""
    if not (peak_gflops > 0 and peak_gbytes > 0):
        raise ValueError("peak compute and bandwidth must be positive")
    ai = perf.arithmetic_intensity(kernel)
    gf = perf.gflops(kernel)
    roof = min(peak_gflops, ai * peak_gbytes)
    return kernel, ai, gf, gf / roof


def ridge_point(peak_gflops, peak_gbytes):
    return peak_gflops / peak_gbytes


def throughput_row(perf):
    s = perf.shares
    return perf.element_steps, perf.total_time, perf.throughput, s["volume"], s["surface"], s["update"]


# --- optimization ladder ----------------------------------------------------

LADDER_COLUMNS = ("variant", "time_s", "speedup", "flux_evals", "log_evals", "div_evals")


class EquivalenceError(AssertionError):
    """A ladder variant disagrees with the baseline; no timings are reported."""


@dataclass
class LadderRow:
    variant: str
    time_s: float
    speedup: float
    flux_evals: int
    log_evals: int
    div_evals: int
    samples: list = field(default_factory=list, repr=False)

    def row(self):
        return self.variant, self.time_s, self.speedup, self.flux_evals, self.log_evals, self.div_evals


def _volume_call(kernel, q, phi, out, aux):
    if kernel.uses_aux:
        bad = compute_aux(q, phi, aux, kernel.K, kernel.counters)
        if bad >= 0:
            raise ValueError("non-physical state in ladder benchmark")
    kernel(q, phi, out, aux=aux)


def variant_discrepancy(kernels, q, phi, mesh, constants=Constants()):
    """Largest per-variable deviation from the first kernel, relative to the flux scale."""
    scale = flux_scale(q, phi, mesh, constants)
    if not np.all(scale > 0):
        raise ValueError("flux scale vanishes for some variable (state at rest); use a moving state")
    aux = np.empty((q.shape[0], NAUX) + q.shape[2:], dtype=q.dtype)
    outs = []
    for k in kernels:
        out = np.empty_like(q)
        _volume_call(k, q, phi, out, aux)
        outs.append(out.astype(np.float64))
    ref = outs[0]
    worst = {}
    for k, out in zip(kernels, outs):
        dev = np.abs(out - ref).reshape(out.shape[0], 5, -1).max(axis=(0, 2))
        worst[k.variant.value] = float(np.max(dev / scale))
    return worst


def gate_state(q, phi, constants=Constants(), speed=10.0, seed=0):
    """``q`` with a random velocity of order ``speed`` added at fixed density and pressure."""
    rng = np.random.default_rng(seed)
    q64 = np.asarray(q, dtype=np.float64)
    rho = q64[:, 0]
    u = q64[:, 1:4] / rho[:, None]
    p = (constants.gamma - 1.0) * (q64[:, 4] - 0.5 * rho * np.sum(u * u, axis=1) - rho * phi)
    u = u + speed * rng.uniform(-1.0, 1.0, size=u.shape)
    out = np.empty_like(q64)
    out[:, 0] = rho
    out[:, 1:4] = rho[:, None] * u
    out[:, 4] = p / (constants.gamma - 1.0) + 0.5 * rho * np.sum(u * u, axis=1) + rho * phi
    return out.astype(q.dtype)


def ladder_benchmark(mesh, ref, q, phi, variants=LADDER, constants=Constants(), repeats=5, warmups=2,
                     tolerance=None, batch=8, clock=time.perf_counter):
    """Median volume-kernel time per RHS for each variant.

    Variants are timed round-robin inside each repetition so that machine
    noise hits all of them alike. The time of a variant that reads auxiliary
    fields includes computing them. Every variant must first agree with the
    first one listed to ``tolerance`` of the flux scale.
    """
    if repeats < 5 or warmups < 2:
        raise ValueError("use at least 5 repetitions after 2 warm-ups")
    dtype = q.dtype
    if tolerance is None:
        tolerance = 1e-13 if dtype == np.float64 else 1e-5
    phi = np.ascontiguousarray(phi, dtype=dtype)
    kernels = [VolumeKernel(v, mesh, ref, constants, dtype, batch=batch) for v in variants]
    worst = variant_discrepancy(kernels, gate_state(q, phi, constants), phi, mesh, constants)
    failed = {k: v for k, v in worst.items() if not v <= tolerance}
    if failed:
        raise EquivalenceError(f"variants disagree beyond {tolerance:g} of the flux scale: {failed}")
    aux = np.empty((q.shape[0], NAUX) + q.shape[2:], dtype=dtype)
    out = np.empty_like(q)
    samples = {k.variant.value: [] for k in kernels}
    for rep in range(warmups + repeats):
        for k in kernels:
            t0 = clock()
            _volume_call(k, q, phi, out, aux)
            dt = clock() - t0
            if rep >= warmups:
                samples[k.variant.value].append(dt)
    rows = []
    base = None
    for k in kernels:
        k.counters[:] = 0
        _volume_call(k, q, phi, out, aux)
        c = dict(zip(COUNTER_NAMES, (int(x) for x in k.counters)))
        t = statistics.median(samples[k.variant.value])
        base = t if base is None else base
        rows.append(LadderRow(k.variant.value, t, base / t, c["flux_evals"], c["log_evals"],
                              c["div_evals"], samples[k.variant.value]))
    return rows


# --- energy -----------------------------------------------------------------

def energy_estimate(time_s, tdp_watts, devices=1):
    """Energy in MJ from time to solution and board power."""
    if time_s <= 0 or tdp_watts <= 0 or devices <= 0:
        raise ValueError("time, power and device count must be positive")
    return time_s * tdp_watts * devices / 1e6


def ratios(slow, fast):
    """``(time ratio, energy ratio)`` of two ``(time_s, energy_mj)`` records."""
    return slow[0] / fast[0], slow[1] / fast[1]


# --- CSV --------------------------------------------------------------------

def format_real(x, precision=64):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    digits = 17 if precision == 64 else 9
    return f"{x:.{digits - 1}e}"


def write_csv(path, columns, rows, precision=64):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, str) else format_real(v, precision) for v in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
