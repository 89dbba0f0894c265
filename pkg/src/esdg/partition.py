"""Morton-contiguous partitioning and overlapped trace exchange between ranks.

Ranks are worker threads, each owning a contiguous range of Morton-ordered
elements. Per right-hand-side evaluation a rank

1. posts the face traces its neighbours need,
2. computes the volume term and the faces it owns completely,
3. waits for the traces it needs,
4. computes the faces shared with other ranks and commits.

Messages go through an in-process transport with one FIFO channel per
ordered rank pair. The numerical result is bitwise identical to the serial
operator because every element accumulates its six face buffers in the same
fixed order.
"""

import bisect
import queue
import threading
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .kernels._pointwise import JIT
from .kernels.rhs import LocalOperator, merge_counters
from .physics import Constants, NonPhysicalState
from .time_integration import LowStorageRK


class ExchangeTimeout(RuntimeError):
    """A peer did not deliver its traces in time."""


class ExchangeAborted(RuntimeError):
    """Another rank failed; this rank stopped waiting."""


@dataclass(frozen=True)
class Partition:
    ranges: tuple  # (lo, hi) per rank
    ghosts: tuple  # per rank: ((element, face), ...) owned by other ranks

    @property
    def nranks(self):
        return len(self.ranges)

    def owner(self, element):
        starts = [lo for lo, _ in self.ranges]
        return bisect.bisect_right(starts, element) - 1


def partition(mesh, nranks):
    ne = mesh.num_elements
    if not 1 <= nranks <= ne:
        raise ValueError(f"need 1 <= ranks <= {ne} elements, got {nranks}")
    base, extra = divmod(ne, nranks)
    ranges, lo = [], 0
    for r in range(nranks):
        hi = lo + base + (1 if r < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    starts = [a for a, _ in ranges]
    ghosts = []
    for lo, hi in ranges:
        keys = []
        for e in range(lo, hi):
            for f in range(6):
                nb = int(mesh.neighbors[e, f])
                if nb >= 0 and not lo <= nb < hi:
                    keys.append((nb, f ^ 1))
        ghosts.append(tuple(keys))
    assert starts[0] == 0 and ranges[-1][1] == ne
    return Partition(tuple(ranges), tuple(ghosts))


@dataclass(frozen=True)
class ExchangePlan:
    """Who sends which face traces to whom, in receive-slot order."""

    sends: tuple  # per rank: ((dest, local_elements, faces), ...)
    recvs: tuple  # per rank: ((source, slots), ...)
    trace_shape: tuple

    def message_count(self):
        return sum(len(s) for s in self.sends)


def build_exchange_plan(part, nq):
    sends = [dict() for _ in range(part.nranks)]
    recvs = []
    for r, keys in enumerate(part.ghosts):
        by_source = {}
        for slot, (e, f) in enumerate(keys):
            s = part.owner(e)
            by_source.setdefault(s, []).append(slot)
            lo = part.ranges[s][0]
            sends[s].setdefault(r, ([], []))
            sends[s][r][0].append(e - lo)
            sends[s][r][1].append(f)
        recvs.append(tuple((s, np.array(slots, dtype=np.int64)) for s, slots in sorted(by_source.items())))
    send_lists = tuple(
        tuple((dst, np.array(el, dtype=np.int64), np.array(fa, dtype=np.int64))
              for dst, (el, fa) in sorted(d.items()))
        for d in sends
    )
    return ExchangePlan(send_lists, tuple(recvs), (5, nq, nq))


@njit(**JIT)
def pack_traces(q, elements, faces, out):
    nq = q.shape[2]
    k_last = nq - 1
    for k in range(elements.shape[0]):
        e = elements[k]
        axis = faces[k] // 2
        idx = k_last if faces[k] % 2 == 1 else 0
        for v in range(5):
            for s in range(nq):
                for t in range(nq):
                    if axis == 0:
                        out[k, v, s, t] = q[e, v, s, t, idx]
                    elif axis == 1:
                        out[k, v, s, t] = q[e, v, s, idx, t]
                    else:
                        out[k, v, s, t] = q[e, v, idx, s, t]


class InProcessTransport:
    """Bounded FIFO channel per ordered rank pair."""

    poll = 0.05

    def __init__(self, nranks, capacity=4):
        self.nranks = nranks
        self._channels = {(a, b): queue.Queue(maxsize=capacity)
                          for a in range(nranks) for b in range(nranks) if a != b}
        self.aborted = threading.Event()
        self.arrivals = []  # (src, dst, tag, time the message became receivable)

    def send(self, src, dst, tag, payload):
        self.arrivals.append((src, dst, tag, time.perf_counter()))
        self._channels[(src, dst)].put((tag, payload))

    def recv(self, src, dst, tag, timeout):
        deadline = time.monotonic() + timeout
        channel = self._channels[(src, dst)]
        while True:
            if self.aborted.is_set():
                raise ExchangeAborted(f"rank {dst}: run aborted while waiting on rank {src}")
            try:
                got_tag, payload = channel.get(timeout=self.poll)
            except queue.Empty:
                if time.monotonic() > deadline:
                    raise ExchangeTimeout(f"rank {dst}: no traces from rank {src} for {tag} within {timeout} s")
                continue
            if got_tag != tag:
                raise RuntimeError(f"rank {dst}: expected message {tag} from rank {src}, got {got_tag}")
            return payload

    def abort(self):
        self.aborted.set()


class DelayedTransport(InProcessTransport):
    """Delivers each message ``delay`` seconds after it is posted."""

    def __init__(self, nranks, delay, capacity=4):
        super().__init__(nranks, capacity)
        self.delay = delay

    def send(self, src, dst, tag, payload):
        timer = threading.Timer(self.delay, super().send, args=(src, dst, tag, payload))
        timer.daemon = True
        timer.start()


class PartitionedSolver:
    """``P`` rank threads, each stepping its own shard with overlapped exchange."""

    def __init__(self, mesh, ref, phi, nranks, constants=Constants(), variant="balanced",
                 dtype=np.float64, dissipation=True, coriolis=None, transport=None, timeout=60.0,
                 batch=8, contravariant=None):
        self.mesh = mesh
        self.dtype = np.dtype(dtype)
        self.partition = partition(mesh, nranks)
        self.plan = build_exchange_plan(self.partition, ref.nq)
        self.ops = [
            LocalOperator(mesh, ref, phi, constants, variant, self.dtype, dissipation, coriolis,
                          elements=rng, ghosts=list(keys), batch=batch, contravariant=contravariant)
            for rng, keys in zip(self.partition.ranges, self.partition.ghosts)
        ]
        self.transport = transport if transport is not None else InProcessTransport(nranks)
        self.timeout = timeout
        self.barrier = threading.Barrier(nranks)
        self.events = [[] for _ in range(nranks)]
        nq = ref.nq
        self._ghost_q = [np.zeros((max(len(k), 1), 5, nq, nq), dtype=self.dtype) for k in self.partition.ghosts]
        self._send_bufs = [[np.zeros((len(el), 5, nq, nq), dtype=self.dtype) for _, el, _ in sends]
                           for sends in self.plan.sends]
        self.update_time = [0.0] * nranks

    @property
    def nranks(self):
        return self.partition.nranks

    def _mark(self, rank, name, tag):
        self.events[rank].append((name, tag, time.perf_counter()))

    def overlapped_rhs(self, rank, q, out, tag):
        op = self.ops[rank]
        self._mark(rank, "post", tag)
        for (dst, elements, faces), buf in zip(self.plan.sends[rank], self._send_bufs[rank]):
            pack_traces(q, elements, faces, buf)
            self.transport.send(rank, dst, tag, buf.copy())
        self._mark(rank, "volume_start", tag)
        op.begin(q)
        op.volume_term(q, out)
        self._mark(rank, "volume_end", tag)
        op.local_surface()
        self._mark(rank, "wait_start", tag)
        ghost_q = self._ghost_q[rank]
        for src, slots in self.plan.recvs[rank]:
            ghost_q[slots] = self.transport.recv(src, rank, tag, self.timeout)
        self._mark(rank, "recv_done", tag)
        op.ghost_surface(ghost_q)
        op.finish(q, out)
        self._mark(rank, "rhs_end", tag)
        return out

    def rhs(self, q_global, out=None):
        """One overlapped evaluation on a global state (for testing)."""
        out = np.empty_like(q_global) if out is None else out
        shards = self.scatter(q_global)
        outs = [np.empty_like(s) for s in shards]

        def work(rank):
            self.overlapped_rhs(rank, shards[rank], outs[rank], ("rhs", 0))

        self._run_threads(work)
        for (lo, hi), o in zip(self.partition.ranges, outs):
            out[lo:hi] = o
        return out

    def scatter(self, q):
        return [np.ascontiguousarray(q[lo:hi]).copy() for lo, hi in self.partition.ranges]

    def gather(self, shards, out):
        for (lo, hi), s in zip(self.partition.ranges, shards):
            out[lo:hi] = s
        return out

    def advance(self, q, dt, nsteps, callback=None, first_step=0):
        """Take ``nsteps`` LSRK steps of the global state ``q`` in place.

        ``callback(step, shards)`` runs on the coordinating thread after each
        step, while the ranks wait at a barrier.
        """
        shards = self.scatter(q)
        step_done = threading.Barrier(self.nranks + 1)
        resume = threading.Barrier(self.nranks + 1)

        def work(rank):
            counter = {"stage": 0}

            def stage_rhs(x, out):
                self.barrier.wait()
                tag = (first_step + counter["step"], counter["stage"])
                counter["stage"] += 1
                self.overlapped_rhs(rank, x, out, tag)

            integrator = LowStorageRK(stage_rhs, shards[rank])
            for n in range(nsteps):
                counter["step"] = n
                counter["stage"] = 0
                op = self.ops[rank]
                inside = sum(op.timers.values())
                t0 = time.perf_counter()
                integrator.step(shards[rank], dt)
                # the step minus the kernels it drove
                self.update_time[rank] += time.perf_counter() - t0 - (sum(op.timers.values()) - inside)
                step_done.wait()
                resume.wait()

        errors = []
        threads = [threading.Thread(target=self._guard, args=(work, r, errors, (step_done, resume)), daemon=True)
                   for r in range(self.nranks)]
        for t in threads:
            t.start()
        try:
            for n in range(nsteps):
                step_done.wait()
                if callback is not None:
                    self.gather(shards, q)
                    callback(first_step + n + 1, q)
                resume.wait()
        except threading.BrokenBarrierError:
            pass
        finally:
            for t in threads:
                t.join()
        if errors:
            raise errors[0]
        return self.gather(shards, q)

    def _guard(self, work, rank, errors, extra_barriers=()):
        try:
            work(rank)
        except Exception as err:  # noqa: BLE001 - re-raised on the coordinator
            if not isinstance(err, (ExchangeAborted, threading.BrokenBarrierError)):
                errors.insert(0, err)
            else:
                errors.append(err)
            self.transport.abort()
            self.barrier.abort()
            for b in extra_barriers:
                b.abort()

    def _run_threads(self, work):
        errors = []
        threads = [threading.Thread(target=self._guard, args=(work, r, errors), daemon=True)
                   for r in range(self.nranks)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]

    def counters(self):
        return merge_counters(self.ops)

    def timers(self):
        total = {}
        for op in self.ops:
            for k, v in op.timers.items():
                total[k] = total.get(k, 0.0) + v
        total["update"] = sum(self.update_time)
        return total


def overlap_observed(events, arrivals, rank):
    """Evaluations whose volume work started before their traces arrived.

    ``events`` is the event log of ``rank``, ``arrivals`` the transport's
    delivery log. Returns the number of evaluations where the rank was already
    computing while a message addressed to it was still in flight.
    """
    starts = {tag: t for name, tag, t in events if name == "volume_start"}
    last_arrival = {}
    for _, dst, tag, t in arrivals:
        if dst != rank:
            continue
        last_arrival[tag] = max(t, last_arrival.get(tag, t))
    return sum(1 for tag, t in starts.items() if tag in last_arrival and t < last_arrival[tag])


__all__ = [
    "DelayedTransport", "ExchangeAborted", "ExchangePlan", "ExchangeTimeout", "InProcessTransport",
    "NonPhysicalState", "Partition", "PartitionedSolver", "build_exchange_plan", "overlap_observed",
    "pack_traces", "partition",
]
