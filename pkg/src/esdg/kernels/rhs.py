"""Semi-discrete right-hand side: volume + surface + source."""

import time
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from ..mesh import REFLECTING
from ..physics import Constants, NonPhysicalState
from ._pointwise import COUNTER_NAMES, NAUX, NCOUNTERS, RHS_CALLS
from .surface import GHOST, MIRROR, commit, face_traces, lift_factors, surface_kernel, trace_aux
from .volume import VolumeKernel, compute_aux, raise_nonphysical


@dataclass
class FaceTable:
    left: np.ndarray
    right: np.ndarray
    axis: np.ndarray

    @classmethod
    def from_list(cls, faces):
        arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())

    def __len__(self):
        return self.left.shape[0]


def build_face_tables(neighbors):
    """Split the faces seen by a set of elements into local and ghost faces.

    ``neighbors`` uses local numbering: ``>= 0`` local element, ``REFLECTING``
    for a wall and ``GHOST - slot`` for a neighbour owned elsewhere. A face
    between two local elements is owned by the element on its low side.
    """
    assert REFLECTING == MIRROR
    local, ghost = [], []
    for e in range(neighbors.shape[0]):
        for d in range(3):
            hi = int(neighbors[e, 2 * d + 1])
            if hi >= 0 or hi == MIRROR:
                local.append((e, hi, d))
            else:
                ghost.append((e, hi, d))
            lo = int(neighbors[e, 2 * d])
            if lo == MIRROR:
                local.append((MIRROR, e, d))
            elif lo <= GHOST:
                ghost.append((lo, e, d))
    return FaceTable.from_list(local), FaceTable.from_list(ghost)


class LocalOperator:
    """Right-hand side over a contiguous range of elements.

    The serial solver uses one operator covering the whole mesh. A rank of a
    partitioned run owns one operator for its range and supplies the traces
    of off-rank neighbours through :meth:`ghost_surface`.
    """

    def __init__(self, mesh, ref, phi, constants=Constants(), variant="balanced", dtype=np.float64,
                 dissipation=True, coriolis=None, elements=None, ghosts=None, batch=8,
                 contravariant=None):
        self.dtype = np.dtype(dtype)
        self.constants = constants
        self.nq = ref.nq
        lo, hi = (0, mesh.num_elements) if elements is None else elements
        self.elements = (lo, hi)
        n = hi - lo
        self.phi = np.ascontiguousarray(phi[lo:hi], dtype=self.dtype)
        neighbors = mesh.neighbors[lo:hi].copy()
        self.ghost_keys = []
        if ghosts is not None:
            # ghosts: ordered list of (element, face) pairs owned elsewhere
            slot = {key: k for k, key in enumerate(ghosts)}
            self.ghost_keys = list(ghosts)
            for e in range(n):
                for f in range(6):
                    nb = int(neighbors[e, f])
                    if nb >= 0 and not lo <= nb < hi:
                        neighbors[e, f] = GHOST - slot[(nb, f ^ 1)]
                    elif nb >= 0:
                        neighbors[e, f] = nb - lo
        elif n != mesh.num_elements:
            raise ValueError("a partial element range needs a ghost list")
        self.neighbors = neighbors
        self.local_faces, self.ghost_faces = build_face_tables(neighbors)
        self.volume = VolumeKernel(variant, _Slice(mesh, lo, hi), ref, constants, self.dtype,
                                   batch=batch, contravariant=contravariant)
        self.counters = self.volume.counters
        self.K = self.volume.K
        self.lift = lift_factors(_Slice(mesh, lo, hi), ref, self.dtype)
        self.dissipation = bool(dissipation)
        nq = self.nq
        self.aux = np.zeros((n, NAUX, nq, nq, nq), dtype=self.dtype)
        self.face_buf = np.zeros((n, 6, 5, nq, nq), dtype=self.dtype)
        self.traces = np.zeros((n, 6, NAUX, nq, nq), dtype=self.dtype)
        ng = len(self.ghost_keys)
        self.ghost_aux = np.zeros((max(ng, 1), NAUX, nq, nq), dtype=self.dtype)
        self.ghost_phi = np.zeros((max(ng, 1), nq, nq), dtype=self.dtype)
        for k, (e, f) in enumerate(self.ghost_keys):
            self.ghost_phi[k] = _face_values(np.asarray(phi[e]), f).astype(self.dtype)
        self.coriolis_f = None
        if coriolis is not None and coriolis.active:
            y = mesh.node_coordinates(ref)[lo:hi, 1]
            self.coriolis_f = coriolis.parameter(y).astype(self.dtype)
        self.timers = defaultdict(float)

    @property
    def num_elements(self):
        return self.elements[1] - self.elements[0]

    def counter_dict(self):
        return {name: int(v) for name, v in zip(COUNTER_NAMES, self.counters)}

    def reset_counters(self):
        self.counters[:] = 0
        self.timers.clear()

    def begin(self, q):
        t0 = time.perf_counter()
        bad = compute_aux(q, self.phi, self.aux, self.K, self.counters)
        self.timers["aux"] += time.perf_counter() - t0
        if bad >= 0:
            try:
                raise_nonphysical(bad, self.nq)
            except NonPhysicalState as err:
                err.element += self.elements[0]
                raise

    def volume_term(self, q, out):
        t0 = time.perf_counter()
        self.volume(q, self.phi, out, aux=self.aux)
        self.timers["volume"] += time.perf_counter() - t0

    def local_surface(self):
        t0 = time.perf_counter()
        ft = self.local_faces
        face_traces(self.aux, self.traces)
        surface_kernel(self.traces, self.ghost_aux, ft.left, ft.right, ft.axis, self.lift, self.K,
                       self.dissipation, self.face_buf, self.counters)
        self.timers["surface"] += time.perf_counter() - t0

    def ghost_surface(self, ghost_q):
        if not len(self.ghost_faces):
            return
        t0 = time.perf_counter()
        bad = trace_aux(ghost_q, self.ghost_phi, self.ghost_aux, self.K)
        if bad >= 0:
            slot = int(bad) // self.nq**2
            raise NonPhysicalState("non-positive density or pressure in a received trace",
                                   element=self.ghost_keys[slot][0])
        ft = self.ghost_faces
        surface_kernel(self.traces, self.ghost_aux, ft.left, ft.right, ft.axis, self.lift, self.K,
                       self.dissipation, self.face_buf, self.counters)
        self.timers["surface"] += time.perf_counter() - t0

    def finish(self, q, out):
        t0 = time.perf_counter()
        commit(out, self.face_buf)
        if self.coriolis_f is not None:
            f = self.coriolis_f
            mu, mv = q[:, 1].copy(), q[:, 2].copy()
            out[:, 1] += f * mv
            out[:, 2] -= f * mu
        self.counters[RHS_CALLS] += 1
        self.timers["commit"] += time.perf_counter() - t0
        return out

    def __call__(self, q, out=None):
        if len(self.ghost_faces):
            raise RuntimeError("operator has off-rank neighbours; drive it through a partitioned run")
        if out is None:
            out = np.empty_like(q)
        self.begin(q)
        self.volume_term(q, out)
        self.local_surface()
        return self.finish(q, out)


RHSOperator = LocalOperator


class _Slice:
    """Mesh view restricted to an element range (only what the kernels read)."""

    def __init__(self, mesh, lo, hi):
        self.metric = mesh.metric[lo:hi]
        self.num_elements = hi - lo


def _face_values(field, face):
    """Trace of a scalar element field ``(nq, nq, nq)`` on ``face``."""
    axis, side = divmod(face, 2)
    k = -1 if side else 0
    if axis == 0:
        return field[:, :, k]
    if axis == 1:
        return field[:, k, :]
    return field[k]


def assemble_rhs(variant, q, mesh, ref, phi, constants=Constants(), coriolis=None, dissipation=True):
    """One-shot tendency; builds a throwaway operator."""
    op = LocalOperator(mesh, ref, phi, constants, variant, q.dtype, dissipation, coriolis)
    return op(q)


def merge_counters(operators):
    total = np.zeros(NCOUNTERS, dtype=np.int64)
    for op in operators:
        total += op.counters
    return {name: int(v) for name, v in zip(COUNTER_NAMES, total)}
