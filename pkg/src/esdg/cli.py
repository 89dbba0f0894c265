"""Command line: ``esdg run <config> [--key value ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .cases import BubbleKind, MissingInitialState, baroclinic_channel, constant_state, \
    potential_temperature, rising_bubble, smooth_random_state
from .config import ConfigError, load_config, parse_overrides
from .diagnostics import (
    CONSERVATION_COLUMNS, ENTROPY_COLUMNS, LADDER_COLUMNS, ROOFLINE_COLUMNS, THROUGHPUT_COLUMNS,
    ConservationMonitor, entropy_monitor, ladder_benchmark, perf_record, roofline_record,
    throughput_row, total_entropy, write_csv,
)
from .kernels import LADDER, LocalOperator
from .mesh import MeshConfig, build_mesh
from .partition import PartitionedSolver
from .physics import Constants, Coriolis, NonPhysicalState
from .reference_element import build_reference_element
from .time_integration import LowStorageRK, compute_dt

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class Simulation:
    """Mesh, operators and initial state of a configuration."""

    def __init__(self, config):
        self.config = config
        self.dtype = np.dtype(config.dtype_name)
        self.constants = Constants(g=config.gravity)
        self.mesh = build_mesh(MeshConfig(
            base=(config.Kx, config.Ky, config.Kz), level=config.L,
            lo=(config.x_lo, config.y_lo, config.z_lo), hi=(config.x_hi, config.y_hi, config.z_hi),
            boundaries=(config.bc_x, config.bc_y, config.bc_z)))
        self.ref = build_reference_element(config.N)
        self.coriolis = Coriolis(config.f0, config.beta, config.y0)
        self.phi = self.mesh.geopotential(self.ref, config.gravity)
        self.q = self.initial_state().astype(self.dtype)
        self.operator = LocalOperator(self.mesh, self.ref, self.phi, self.constants, config.variant,
                                      self.dtype, config.dissipation, self.coriolis,
                                      contravariant=config.contravariant_flag())
        self.solver = None
        if config.ranks > 1:
            self.solver = PartitionedSolver(self.mesh, self.ref, self.phi, config.ranks, self.constants,
                                            config.variant, self.dtype, config.dissipation, self.coriolis,
                                            contravariant=config.contravariant_flag())

    def initial_state(self):
        c = self.config
        if c.case == "rising_bubble_sharp":
            return rising_bubble(self.mesh, self.ref, BubbleKind.SHARP, self.constants)
        if c.case == "rising_bubble_smooth":
            return rising_bubble(self.mesh, self.ref, BubbleKind.SMOOTH, self.constants)
        if c.case == "constant_state":
            return constant_state(self.mesh, self.ref, constants=self.constants)
        if c.case == "entropy_test":
            q, phi = smooth_random_state(self.mesh, self.ref, np.random.default_rng(c.seed), self.constants,
                                         gravity=c.gravity != 0.0)
            self.phi = phi
            return q
        return baroclinic_channel(self.mesh, self.ref)

    def time_step(self):
        c = self.config
        dt = c.dt_override if c.dt_override > 0 else compute_dt(self.q, self.phi, self.mesh, self.ref,
                                                               c.courant, self.constants)
        nsteps = c.nsteps
        if c.t_final > 0:
            nsteps = max(1, math.ceil(c.t_final / dt - 1e-12))
            dt = c.t_final / nsteps
        return dt, nsteps

    def advance(self, dt, nsteps, callback):
        """Step ``self.q`` in place, calling ``callback(step)`` after every step."""
        if self.solver is not None:
            self.solver.advance(self.q, dt, nsteps, lambda n, q: callback(n))
            return
        op = self.operator
        integrator = LowStorageRK(op, self.q)
        for n in range(1, nsteps + 1):
            inside = sum(op.timers.values())
            t0 = time.perf_counter()
            integrator.step(self.q, dt)
            op.timers["update"] += time.perf_counter() - t0 - (sum(op.timers.values()) - inside)
            callback(n)

    def counters(self):
        return self.solver.counters() if self.solver is not None else self.operator.counter_dict()

    def timers(self):
        return self.solver.timers() if self.solver is not None else dict(self.operator.timers)


def theta_slice(sim, q):
    """``(x, z, theta)`` rows at the node plane closest to ``y = 0``."""
    xyz = sim.mesh.node_coordinates(sim.ref)
    theta = potential_temperature(np.asarray(q, dtype=np.float64), sim.phi, sim.constants)
    y = xyz[:, 1]
    plane = np.isclose(y, y.flat[np.argmin(np.abs(y))], rtol=0.0, atol=1e-9 * (sim.config.y_hi - sim.config.y_lo))
    x, z, t = xyz[:, 0][plane], xyz[:, 2][plane], theta[plane]
    order = np.lexsort((x, z))
    rows, seen = [], set()
    for k in order:
        key = (round(float(z[k]), 9), round(float(x[k]), 9))
        if key not in seen:  # nodes shared by neighbouring elements appear once
            seen.add(key)
            rows.append((x[k], z[k], t[k]))
    return rows


class Outputs:
    def __init__(self, config):
        self.dir = config.output_dir
        self.precision = config.precision
        os.makedirs(self.dir, exist_ok=True)

    def path(self, *parts):
        return os.path.join(self.dir, *parts)

    def csv(self, name, columns, rows):
        write_csv(self.path(name), columns, rows, self.precision)

    def slice(self, step, rows):
        os.makedirs(self.path("slices"), exist_ok=True)
        write_csv(self.path("slices", f"theta_y0_{step:06d}.csv"), ("x", "z", "theta"), rows, self.precision)

    def manifest(self, config, info):
        with open(self.path("manifest.txt"), "w", encoding="utf-8") as fh:
            fh.write(config.to_text())
            for key, value in info.items():
                fh.write(f"# {key} = {value}\n")


def run(config, log=print):
    """Execute a configuration; returns the manifest information."""
    out = Outputs(config)
    info = {"version": __version__, "dof": config.dof, "elements": config.num_elements}
    try:
        sim = Simulation(config)
    except MissingInitialState as err:
        raise ConfigError(str(err)) from None
    if config.mode == "benchmark":
        return _benchmark(sim, out, info, log)
    dt, nsteps = sim.time_step()
    info.update(dt=repr(float(dt)), nsteps=nsteps)
    log(f"{config.case}: {config.num_elements} elements, {config.dof} DOF, dt={dt:.6g}, {nsteps} steps")
    monitor = ConservationMonitor(sim.mesh, sim.ref)
    weights = monitor.weights
    # entropy production is evaluated by a separate operator so the run's counters stay clean
    probe = LocalOperator(sim.mesh, sim.ref, sim.phi, sim.constants, config.variant, sim.dtype,
                          config.dissipation, sim.coriolis, contravariant=config.contravariant_flag())
    entropy_rows = []

    def sample(step):
        t = step * dt
        monitor.record(step, t, sim.q)
        rate = entropy_monitor(sim.q, probe(sim.q), sim.phi, weights, sim.constants)
        entropy_rows.append((step, t, total_entropy(sim.q, sim.phi, weights, sim.constants), rate))

    def callback(step):
        if (config.output_every and step % config.output_every == 0) or step == nsteps:
            sample(step)
        if config.slice_every and (step % config.slice_every == 0 or step == nsteps):
            out.slice(step, theta_slice(sim, sim.q))

    sample(0)
    if config.slice_every:
        out.slice(0, theta_slice(sim, sim.q))
    start = time.perf_counter()
    status = "ok"
    try:
        sim.advance(dt, nsteps, callback)
    except NonPhysicalState as err:
        status = "failed"
        info.update(failure=str(err), failure_element=err.element, failure_node=err.node,
                    failure_stage=err.stage)
        raise
    finally:
        info["status"] = status
        info["wall_seconds"] = time.perf_counter() - start
        info.update(sim.counters())
        timers = sim.timers()
        info.update({f"time_{k}": v for k, v in sorted(timers.items())})
        if len(monitor.history) >= 2:
            report = monitor.report()
            out.csv("conservation.csv", CONSERVATION_COLUMNS, report.rows())
            info.update(max_mass_drift=report.max_mass_drift, max_energy_drift=report.max_energy_drift)
        out.csv("entropy.csv", ENTROPY_COLUMNS, entropy_rows)
        if status == "ok":
            steps_done = nsteps
            perf = perf_record(timers, sim.counters(), config.variant, config.num_elements, config.N + 1,
                               sim.dtype, steps_done, dissipation=config.dissipation)
            out.csv("roofline.csv", ROOFLINE_COLUMNS,
                    [roofline_record(perf, k, config.peak_gflops, config.peak_gbytes) for k in perf.times])
            out.csv("throughput.csv", THROUGHPUT_COLUMNS, [throughput_row(perf)])
            info["element_steps_per_second"] = perf.throughput
        out.manifest(config, info)
    return info


def _benchmark(sim, out, info, log):
    c = sim.config
    rows = ladder_benchmark(sim.mesh, sim.ref, sim.q, sim.phi, LADDER, sim.constants, repeats=c.repeats,
                            warmups=c.warmups)
    out.csv("ladder.csv", LADDER_COLUMNS, [r.row() for r in rows])
    for r in rows:
        log(f"{r.variant:>10s}  {r.time_s:.6f} s  {r.speedup:5.2f}x")
    info["status"] = "ok"
    out.manifest(c, info)
    return info


def build_parser():
    parser = argparse.ArgumentParser(prog="esdg", description="Entropy-stable DG Euler solver with gravity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configuration file; --key value pairs override it")
    p_run.add_argument("config")
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        config = load_config(args.config, parse_overrides(extra))
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"cannot read configuration: {err}", file=sys.stderr)
        return EXIT_IO
    try:
        run(config)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NonPhysicalState as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
