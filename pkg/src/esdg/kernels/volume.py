"""Flux-differencing volume kernels, one per optimization-ladder stage.

Every variant computes, for each element, node and reference direction ``d``,

    dq_i/dt += -sum_{j != i} 2 D[i, j] (G F)(q_i, q_j)

along the tensor line through node ``i``. The diagonal term is dropped: on
LGL nodes ``2 w_0 D[0, 0] = -1`` and ``2 w_N D[N, N] = 1`` cancel exactly
against the boundary part of the surface term, which therefore only needs
the numerical flux.

Execution model. Elements are processed in batches; the state of a batch is
staged into a workspace ``W[d, var, i, lane]`` where ``i`` indexes nodes
along direction ``d`` and ``lane`` runs over (element in batch, line). All
inner loops run over lanes with unit stride, so a pair ``(i, j)`` is applied
to every line of the batch at once. Each inner loop is split so that it
stays simple enough for LLVM to vectorize.
"""

import math
from enum import Enum

import numpy as np
from numba import njit

from ..physics import NonPhysicalState
from ._pointwise import (
    B, DIVS, FLUX, GM1, HALF, INV2GM1, INVB, JIT, LB, LOGS, LRHO, NAUX, NCOUNTERS, ONE, PHI,
    RHO, TWO, U0, ZERO, inv_ln_mean, kernel_constants, ln_mean, ln_mean_classic,
    ln_mean_naive,
)
from .schedule import ScheduleKind, build_schedule


class KernelVariant(str, Enum):
    BASELINE = "baseline"
    FUSED = "fused"
    PRECOMPUTE = "precompute"
    LOGMEAN = "logmean"
    SYMMETRIC = "symmetric"
    BALANCED = "balanced"


LADDER = tuple(KernelVariant)

_MODE = {  # flux evaluation family per variant
    KernelVariant.BASELINE: 0,
    KernelVariant.FUSED: 0,
    KernelVariant.PRECOMPUTE: 1,
    KernelVariant.LOGMEAN: 2,
    KernelVariant.SYMMETRIC: 3,
    KernelVariant.BALANCED: 3,
}
_SCHEDULE = {
    KernelVariant.SYMMETRIC: ScheduleKind.UPPER,
    KernelVariant.BALANCED: ScheduleKind.WEIGHTED,
}

# scratch rows
RLN, IBLN, SI0, SI1, SI2, SI3, SI4, SJ1, SJ2, SJ3, GI, GJ = range(12)
NSCRATCH = 12
NCONS = 6  # staged conservative state plus geopotential


@njit(**JIT)
def compute_aux(q, phi, aux, K, counters):
    """Fill ``aux`` from ``q``; return the flat index of the first bad node or -1."""
    ne, nq = q.shape[0], q.shape[2]
    n3 = nq * nq * nq
    nbad = 0
    for e in range(ne):
        # flat views; the primitive loop vectorizes, the log loop does not
        qe = q[e].reshape((5, n3))
        ae = aux[e].reshape((NAUX, n3))
        pe = phi[e].reshape(n3)
        for k in range(n3):
            r = qe[0, k]
            m0 = qe[1, k]
            m1 = qe[2, k]
            m2 = qe[3, k]
            inv_r = K[ONE] / r
            u0 = m0 * inv_r
            u1 = m1 * inv_r
            u2 = m2 * inv_r
            p = K[GM1] * (qe[4, k] - K[HALF] * (m0 * u0 + m1 * u1 + m2 * u2) - r * pe[k])
            nbad += 0 if (r > K[ZERO] and p > K[ZERO]) else 1
            ae[RHO, k] = r
            ae[U0, k] = u0
            ae[U0 + 1, k] = u1
            ae[U0 + 2, k] = u2
            ae[4, k] = p
            ae[B, k] = K[HALF] * r / p
            ae[INVB, k] = K[TWO] * p * inv_r
            ae[PHI, k] = pe[k]
        for k in range(n3):
            ae[LRHO, k] = math.log(ae[RHO, k])
            ae[LB, k] = math.log(ae[B, k])
    n = ne * n3
    counters[LOGS] += 2 * n
    counters[DIVS] += 2 * n
    if nbad == 0:
        return -1
    for e in range(ne):
        ae = aux[e].reshape((NAUX, n3))
        for k in range(n3):
            if not (ae[RHO, k] > K[ZERO] and ae[4, k] > K[ZERO]):
                return e * n3 + k
    return -1


@njit(**JIT)
def _stage(src, e0, nb, d, W):
    """Copy ``src[e0:e0+nb]`` into the line-major workspace of direction ``d``."""
    nv, nq = src.shape[1], src.shape[2]
    nl = nq * nq
    for eb in range(nb):
        e = e0 + eb
        for v in range(nv):
            for c in range(nq):
                for b in range(nq):
                    for a in range(nq):
                        x = src[e, v, c, b, a]
                        if d == 0:
                            W[v, a, eb * nl + c * nq + b] = x
                        elif d == 1:
                            W[v, b, eb * nl + c * nq + a] = x
                        else:
                            W[v, c, eb * nl + b * nq + a] = x


@njit(**JIT)
def _stage_scalar(src, e0, nb, d, W, row):
    nq = src.shape[1]
    nl = nq * nq
    for eb in range(nb):
        e = e0 + eb
        for c in range(nq):
            for b in range(nq):
                for a in range(nq):
                    x = src[e, c, b, a]
                    if d == 0:
                        W[row, a, eb * nl + c * nq + b] = x
                    elif d == 1:
                        W[row, b, eb * nl + c * nq + a] = x
                    else:
                        W[row, c, eb * nl + b * nq + a] = x


@njit(**JIT)
def _unstage_add(O, out, e0, nb, d):
    nq = out.shape[2]
    nl = nq * nq
    for eb in range(nb):
        e = e0 + eb
        for v in range(5):
            for c in range(nq):
                for b in range(nq):
                    for a in range(nq):
                        if d == 0:
                            x = O[v, a, eb * nl + c * nq + b]
                        elif d == 1:
                            x = O[v, b, eb * nl + c * nq + a]
                        else:
                            x = O[v, c, eb * nl + b * nq + a]
                        out[e, v, c, b, a] += x


@njit(**JIT)
def _lane_metric(metric, e0, nb, nl, d, Gl):
    for eb in range(nb):
        for k in range(3):
            g = metric[e0 + eb, d, k]
            for l in range(eb * nl, (eb + 1) * nl):
                Gl[k, l] = g


@njit(**JIT)
def _flux_baseline(W, Gl, S, i, j, L, K):
    """Conservative inputs, logs inside, 3 x 5 flux matrix contracted with a metric row."""
    nlog = 0
    ndiv = 0
    for l in range(L):
        ri = W[0, i, l]
        rj = W[0, j, l]
        inv_ri = K[ONE] / ri
        inv_rj = K[ONE] / rj
        ui0 = W[1, i, l] * inv_ri
        ui1 = W[2, i, l] * inv_ri
        ui2 = W[3, i, l] * inv_ri
        uj0 = W[1, j, l] * inv_rj
        uj1 = W[2, j, l] * inv_rj
        uj2 = W[3, j, l] * inv_rj
        phi_i = W[5, i, l]
        phi_j = W[5, j, l]
        pi = K[GM1] * (W[4, i, l] - K[HALF] * (W[1, i, l] * ui0 + W[2, i, l] * ui1 + W[3, i, l] * ui2)
                       - ri * phi_i)
        pj = K[GM1] * (W[4, j, l] - K[HALF] * (W[1, j, l] * uj0 + W[2, j, l] * uj1 + W[3, j, l] * uj2)
                       - rj * phi_j)
        bi = ri / (K[TWO] * pi)
        bj = rj / (K[TWO] * pj)
        rln, nd1, nl1 = ln_mean_classic(ri, rj, K)
        bln, nd2, nl2 = ln_mean_classic(bi, bj, K)
        nlog += nl1 + nl2
        ndiv += nd1 + nd2 + 7
        ba = K[HALF] * (bi + bj)
        ps = K[HALF] * (ri + rj) / (K[TWO] * ba)
        a0 = K[HALF] * (ui0 + uj0)
        a1 = K[HALF] * (ui1 + uj1)
        a2 = K[HALF] * (ui2 + uj2)
        uu = K[HALF] * (ui0 * uj0 + ui1 * uj1 + ui2 * uj2)
        pb = K[HALF] * (phi_i + phi_j)
        eint = K[ONE] / (K[TWO] * K[GM1] * bln)
        grav = K[HALF] * (ba * rln / bi) * (phi_j - phi_i)
        # rows of the direction flux matrix F[k, :]
        f00 = rln * a0
        f10 = rln * a1
        f20 = rln * a2
        f01 = f00 * a0 + ps + grav
        f02 = f00 * a1
        f03 = f00 * a2
        f11 = f10 * a0
        f12 = f10 * a1 + ps + grav
        f13 = f10 * a2
        f21 = f20 * a0
        f22 = f20 * a1
        f23 = f20 * a2 + ps + grav
        f04 = f00 * (eint + uu + pb) + ps * a0
        f14 = f10 * (eint + uu + pb) + ps * a1
        f24 = f20 * (eint + uu + pb) + ps * a2
        g0 = Gl[0, l]
        g1 = Gl[1, l]
        g2 = Gl[2, l]
        S[SI0, l] = g0 * f00 + g1 * f10 + g2 * f20
        S[SI1, l] = g0 * f01 + g1 * f11 + g2 * f21
        S[SI2, l] = g0 * f02 + g1 * f12 + g2 * f22
        S[SI3, l] = g0 * f03 + g1 * f13 + g2 * f23
        S[SI4, l] = g0 * f04 + g1 * f14 + g2 * f24
    return nlog, ndiv


@njit(**JIT)
def _means_naive(W, S, i, j, L, K):
    ndiv = 0
    for l in range(L):
        rln, n1 = ln_mean_naive(W[RHO, i, l], W[RHO, j, l], W[LRHO, i, l], W[LRHO, j, l], K)
        bln, n2 = ln_mean_naive(W[B, i, l], W[B, j, l], W[LB, i, l], W[LB, j, l], K)
        S[RLN, l] = rln
        S[IBLN, l] = K[ONE] / bln
        ndiv += n1 + n2 + 1
    return ndiv


@njit(**JIT)
def _means(W, S, i, j, L, K):
    for l in range(L):
        S[RLN, l] = ln_mean(W[RHO, i, l], W[RHO, j, l], W[LRHO, i, l], W[LRHO, j, l], K)
        S[IBLN, l] = inv_ln_mean(W[B, i, l], W[B, j, l], W[LB, i, l], W[LB, j, l], K)


@njit(**JIT)
def _flux_scalars(W, Wud, g, S, i, j, L, K):
    """Contravariant mass flux, pressure-plus-gravity terms and the energy flux
    without its kinetic part, with the metric folded into the direction velocity.

    Kept apart from :func:`_flux_rows` because a loop with this many reads and
    the row writes combined needs more runtime alias checks than LLVM will
    emit, and would not vectorize.
    """
    for l in range(L):
        gl = g[l]
        rln = S[RLN, l]
        bs = W[B, i, l] + W[B, j, l]
        ps = gl * (K[HALF] * (W[RHO, i, l] + W[RHO, j, l])) / bs
        ud = K[HALF] * (Wud[i, l] + Wud[j, l])
        fr = rln * (gl * ud)
        pb = K[HALF] * (W[PHI, i, l] + W[PHI, j, l])
        h = K[HALF] * (K[HALF] * bs) * rln * gl * (W[PHI, j, l] - W[PHI, i, l])
        S[SI0, l] = fr
        S[SI4, l] = fr * (K[INV2GM1] * S[IBLN, l] + pb) + ps * ud
        S[GI, l] = ps + h * W[INVB, i, l]
        S[GJ, l] = ps - h * W[INVB, j, l]


@njit(**JIT)
def _flux_rows(W, S, i, j, L, K, e0, e1, e2):
    """Momentum rows of both nodes and the kinetic energy part.

    ``(e0, e1, e2)`` is the unit vector of the line direction, so the
    pressure and gravity terms land in the matching momentum row without a
    data-dependent branch.
    """
    for l in range(L):
        fr = S[SI0, l]
        ui0 = W[U0, i, l]
        uj0 = W[U0, j, l]
        ui1 = W[U0 + 1, i, l]
        uj1 = W[U0 + 1, j, l]
        ui2 = W[U0 + 2, i, l]
        uj2 = W[U0 + 2, j, l]
        gi = S[GI, l]
        gj = S[GJ, l]
        m0 = fr * (K[HALF] * (ui0 + uj0))
        m1 = fr * (K[HALF] * (ui1 + uj1))
        m2 = fr * (K[HALF] * (ui2 + uj2))
        S[SI1, l] = m0 + e0 * gi
        S[SI2, l] = m1 + e1 * gi
        S[SI3, l] = m2 + e2 * gi
        S[SJ1, l] = m0 + e0 * gj
        S[SJ2, l] = m1 + e1 * gj
        S[SJ3, l] = m2 + e2 * gj
        S[SI4, l] += fr * (K[HALF] * (ui0 * uj0 + ui1 * uj1 + ui2 * uj2))


@njit(**JIT)
def _flux_matrix(W, Gl, S, i, j, L, K):
    """All three direction fluxes, then contraction with the metric row."""
    for l in range(L):
        ri = W[RHO, i, l]
        rj = W[RHO, j, l]
        rln = S[RLN, l]
        bs = W[B, i, l] + W[B, j, l]
        ps = (K[HALF] * (ri + rj)) / bs
        a0 = K[HALF] * (W[U0, i, l] + W[U0, j, l])
        a1 = K[HALF] * (W[U0 + 1, i, l] + W[U0 + 1, j, l])
        a2 = K[HALF] * (W[U0 + 2, i, l] + W[U0 + 2, j, l])
        uu = K[HALF] * (W[U0, i, l] * W[U0, j, l] + W[U0 + 1, i, l] * W[U0 + 1, j, l]
                        + W[U0 + 2, i, l] * W[U0 + 2, j, l])
        pb = K[HALF] * (W[PHI, i, l] + W[PHI, j, l])
        ein = K[INV2GM1] * S[IBLN, l] + uu + pb
        h = K[HALF] * (K[HALF] * bs) * rln * (W[PHI, j, l] - W[PHI, i, l])
        gi = ps + h * W[INVB, i, l]
        gj = ps - h * W[INVB, j, l]
        f0 = rln * a0
        f1 = rln * a1
        f2 = rln * a2
        g0 = Gl[0, l]
        g1 = Gl[1, l]
        g2 = Gl[2, l]
        S[SI0, l] = g0 * f0 + g1 * f1 + g2 * f2
        S[SI1, l] = g0 * (f0 * a0 + gi) + g1 * (f1 * a0) + g2 * (f2 * a0)
        S[SI2, l] = g0 * (f0 * a1) + g1 * (f1 * a1 + gi) + g2 * (f2 * a1)
        S[SI3, l] = g0 * (f0 * a2) + g1 * (f1 * a2) + g2 * (f2 * a2 + gi)
        S[SI4, l] = g0 * (f0 * ein + ps * a0) + g1 * (f1 * ein + ps * a1) + g2 * (f2 * ein + ps * a2)
        S[SJ1, l] = g0 * (f0 * a0 + gj) + g1 * (f1 * a0) + g2 * (f2 * a0)
        S[SJ2, l] = g0 * (f0 * a1) + g1 * (f1 * a1 + gj) + g2 * (f2 * a1)
        S[SJ3, l] = g0 * (f0 * a2) + g1 * (f1 * a2) + g2 * (f2 * a2 + gj)


@njit(**JIT)
def _acc_one(S, O, i, ci, L):
    for l in range(L):
        O[0, i, l] += ci * S[SI0, l]
        O[1, i, l] += ci * S[SI1, l]
        O[2, i, l] += ci * S[SI2, l]
        O[3, i, l] += ci * S[SI3, l]
        O[4, i, l] += ci * S[SI4, l]


@njit(**JIT)
def _acc_two(S, O, i, j, ci, cj, L):
    for l in range(L):
        f = S[SI0, l]
        O[0, i, l] += ci * f
        O[0, j, l] += cj * f
        O[1, i, l] += ci * S[SI1, l]
        O[1, j, l] += cj * S[SJ1, l]
        O[2, i, l] += ci * S[SI2, l]
        O[2, j, l] += cj * S[SJ2, l]
        O[3, i, l] += ci * S[SI3, l]
        O[3, j, l] += cj * S[SJ3, l]
        f = S[SI4, l]
        O[4, i, l] += ci * f
        O[4, j, l] += cj * f


@njit(**JIT)
def _sweep(mode, contravariant, Wd, Gl, d, D2, pi, pj, pw, S, O, L, K, counters):
    """Apply every scheduled pair of one direction to ``L`` staged lines."""
    e0 = K[ONE] if d == 0 else K[ZERO]
    e1 = K[ONE] if d == 1 else K[ZERO]
    e2 = K[ONE] if d == 2 else K[ZERO]
    for v in range(5):
        for i in range(O.shape[1]):
            for l in range(L):
                O[v, i, l] = K[ZERO]
    for p in range(pi.shape[0]):
        i = pi[p]
        j = pj[p]
        ci = -(pw[p] * D2[i, j])
        if mode == 0:
            nlog, ndiv = _flux_baseline(Wd, Gl, S, i, j, L, K)
            counters[LOGS] += nlog
            counters[DIVS] += ndiv
        else:
            if mode == 1:
                counters[DIVS] += _means_naive(Wd, S, i, j, L, K)
            else:
                _means(Wd, S, i, j, L, K)
                counters[DIVS] += 4 * L
            if contravariant:
                _flux_scalars(Wd, Wd[U0 + d], Gl[d], S, i, j, L, K)
                _flux_rows(Wd, S, i, j, L, K, e0, e1, e2)
            else:
                _flux_matrix(Wd, Gl, S, i, j, L, K)
            counters[DIVS] += L
        if mode == 3:
            _acc_two(S, O, i, j, ci, -(pw[p] * D2[j, i]), L)
        else:
            _acc_one(S, O, i, ci, L)
        counters[FLUX] += L


@njit(**JIT)
def volume_kernel(mode, fused, contravariant, src, phi, metric, D2, pi, pj, pw, out,
                  K, counters, batch, W, Gl, S, O):
    """Volume tendency of every element into ``out`` (overwritten).

    ``src`` is the conservative state for mode 0 and the auxiliary fields
    otherwise. ``fused`` stages each element batch once for all three
    directions; otherwise each direction is a separate pass over the mesh.
    """
    ne, nq = src.shape[0], src.shape[2]
    nl = nq * nq
    for e in range(ne):
        for v in range(5):
            for c in range(nq):
                for b in range(nq):
                    for a in range(nq):
                        out[e, v, c, b, a] = K[ZERO]
    if fused:
        for e0 in range(0, ne, batch):
            nb = min(batch, ne - e0)
            L = nb * nl
            for d in range(3):
                _stage(src, e0, nb, d, W[d])
                if mode == 0:
                    _stage_scalar(phi, e0, nb, d, W[d], 5)
            for d in range(3):
                _lane_metric(metric, e0, nb, nl, d, Gl)
                _sweep(mode, contravariant, W[d], Gl, d, D2, pi, pj, pw, S, O, L, K, counters)
                _unstage_add(O, out, e0, nb, d)
    else:
        for d in range(3):
            for e0 in range(0, ne, batch):
                nb = min(batch, ne - e0)
                L = nb * nl
                _stage(src, e0, nb, d, W[0])
                if mode == 0:
                    _stage_scalar(phi, e0, nb, d, W[0], 5)
                _lane_metric(metric, e0, nb, nl, d, Gl)
                _sweep(mode, contravariant, W[0], Gl, d, D2, pi, pj, pw, S, O, L, K, counters)
                _unstage_add(O, out, e0, nb, d)


def split_operator(ref, dtype):
    """``2 D`` with a zero diagonal, in 64-bit then rounded."""
    d2 = 2.0 * np.asarray(ref.diff_matrix, dtype=np.float64)
    np.fill_diagonal(d2, 0.0)
    return d2.astype(dtype)


def raise_nonphysical(bad, nq, stage=None):
    e, rest = divmod(int(bad), nq**3)
    c, rest = divmod(rest, nq * nq)
    b, a = divmod(rest, nq)
    raise NonPhysicalState("non-positive density or pressure", element=e, node=(a, b, c), stage=stage)


class VolumeKernel:
    """One ladder variant of the volume term bound to a mesh and precision.

    ``contravariant`` defaults to the ladder convention: off for the first two
    stages and on from ``precompute`` onwards. Passing it explicitly
    overrides that for any variant that evaluates from auxiliary fields.
    """

    def __init__(self, variant, mesh, ref, constants, dtype=np.float64, batch=8,
                 contravariant=None, schedule=None):
        self.variant = KernelVariant(variant)
        self.dtype = np.dtype(dtype)
        self.nq = ref.nq
        self.mode = _MODE[self.variant]
        self.fused = self.variant is not KernelVariant.BASELINE
        if contravariant is None:
            contravariant = self.mode > 0
        self.contravariant = bool(contravariant) and self.mode > 0
        if schedule is None:
            schedule = build_schedule(self.nq, _SCHEDULE.get(self.variant, ScheduleKind.FULL))
        if self.mode == 3 and not schedule.symmetric:
            raise ValueError(f"variant {self.variant.value} needs a half-sweep schedule")
        if self.mode < 3 and schedule.kind is not ScheduleKind.FULL:
            raise ValueError(f"variant {self.variant.value} sweeps every ordered pair")
        self.schedule = schedule
        self.pi, self.pj, self.pw = schedule.pairs(self.dtype)
        self.K = kernel_constants(constants, self.dtype)
        self.D2 = split_operator(ref, self.dtype)
        self.metric = mesh.metric.astype(self.dtype)
        self.batch = int(batch)
        nq = self.nq
        lanes = self.batch * nq * nq
        nv = NCONS if self.mode == 0 else NAUX
        self.W = np.zeros((3, nv, nq, lanes), dtype=self.dtype)
        self.Gl = np.zeros((3, lanes), dtype=self.dtype)
        self.S = np.zeros((NSCRATCH, lanes), dtype=self.dtype)
        self.O = np.zeros((5, nq, lanes), dtype=self.dtype)
        self.counters = np.zeros(NCOUNTERS, dtype=np.int64)

    @property
    def uses_aux(self):
        return self.mode > 0

    def evaluations_per_rhs(self, num_elements):
        return 3 * num_elements * self.nq**2 * self.schedule.num_pairs

    def __call__(self, q, phi, out=None, aux=None):
        if out is None:
            out = np.empty_like(q)
        if self.mode == 0:
            src = q
        else:
            if aux is None:
                aux = np.empty((q.shape[0], NAUX) + q.shape[2:], dtype=self.dtype)
                bad = compute_aux(q, phi, aux, self.K, self.counters)
                if bad >= 0:
                    raise_nonphysical(bad, self.nq)
            src = aux
        volume_kernel(self.mode, self.fused, self.contravariant, src, phi, self.metric, self.D2,
                      self.pi, self.pj, self.pw, out, self.K, self.counters, self.batch,
                      self.W, self.Gl, self.S, self.O)
        return out


def volume_rhs(variant, q, mesh, ref, phi, constants, **kwargs):
    kernel = VolumeKernel(variant, mesh, ref, constants, dtype=q.dtype, **kwargs)
    return kernel(q, phi)
