"""Face terms: numerical flux with matrix dissipation, lifted to the face nodes.

Faces are described by three integer arrays. ``left[f]`` and ``right[f]``
name the elements on the low and high side of face ``f`` along ``axis[f]``:

* ``>= 0``: a local element, whose trace is read from the auxiliary fields
  and whose face buffer receives the lifted flux;
* ``MIRROR``: a reflecting wall, the trace is the other side's with the
  normal velocity negated;
* ``<= GHOST``: a trace received from another rank, slot ``GHOST - value``.

Each face is evaluated once and writes the contribution of both sides into
per-element face buffers ``face_buf[e, face, var, s, t]``. :func:`commit`
then adds the six buffers of each element in a fixed order, which keeps the
result independent of the order in which faces were evaluated.
"""

import math

import numpy as np
from numba import njit

from ._pointwise import (
    B, DIVS, GAMMA, GM1_G, HALF, INV2G, INV2GM1, INVB, INVGM1, JIT, LB, LOG2, LRHO, NAUX,
    ONE, PHI, RHO, SQRTS, SURFACE, TWO, U0, U1, U2, ZERO, inv_ln_mean, ln_mean, node_aux,
)

MIRROR = -1
GHOST = -2


@njit(inline="always")
def _node(nq, axis, side, s, t):
    """Volume index ``(c, b, a)`` of trace node ``(s, t)`` on a face."""
    k = nq - 1 if side == 1 else 0
    if axis == 0:
        return s, t, k
    if axis == 1:
        return s, k, t
    return k, s, t


@njit(**JIT)
def trace_aux(qt, phit, auxt, K):
    """Auxiliary fields of received traces; returns first bad index or -1."""
    n, nq = qt.shape[0], qt.shape[2]
    bad = -1
    for f in range(n):
        for s in range(nq):
            for t in range(nq):
                r = qt[f, 0, s, t]
                ph = phit[f, s, t]
                u0, u1, u2, p, bb, invb, lr, lb = node_aux(r, qt[f, 1, s, t], qt[f, 2, s, t], qt[f, 3, s, t],
                                                           qt[f, 4, s, t], ph, K)
                if bad < 0 and not (r > K[ZERO] and p > K[ZERO]):
                    bad = (f * nq + s) * nq + t
                auxt[f, RHO, s, t] = r
                auxt[f, U0, s, t] = u0
                auxt[f, U0 + 1, s, t] = u1
                auxt[f, U0 + 2, s, t] = u2
                auxt[f, 4, s, t] = p
                auxt[f, B, s, t] = bb
                auxt[f, INVB, s, t] = invb
                auxt[f, LRHO, s, t] = lr
                auxt[f, LB, s, t] = lb
                auxt[f, PHI, s, t] = ph
    return bad


@njit(**JIT)
def face_traces(aux, traces):
    """Copy the six face traces of every element into ``traces[e, face, row, s, t]``.

    One pass per element keeps the face gather from re-reading whole element
    blocks of ``aux`` for every face.
    """
    ne, nq = aux.shape[0], aux.shape[2]
    for e in range(ne):
        for face in range(6):
            axis = face // 2
            side = face % 2
            for row in range(NAUX):
                for s in range(nq):
                    for t in range(nq):
                        c, b, a = _node(nq, axis, side, s, t)
                        traces[e, face, row, s, t] = aux[e, row, c, b, a]


@njit(inline="always")
def _v1(r, u0, u1, u2, bb, lr, lb, K):
    # first entropy variable without the geopotential part
    s = (lr - lb - K[LOG2]) - K[GAMMA] * lr
    return (K[GAMMA] - s) * K[INVGM1] - bb * (u0 * u0 + u1 * u1 + u2 * u2)


# rows of the per-lane face quantities ``M``: four means, five fluxes, the gravity term
MRLN, MIBLN, MPS, MCH, MF0, MF1, MF2, MF3, MF4, MH = range(10)
NFACE = 10
BATCH_LANES = 256  # face nodes staged per batch


@njit(inline="always")
def _stage(src, T, side, base, nq):
    # trace rows keep the auxiliary slot numbering, lanes run over (s, t)
    for row in range(NAUX):
        for s in range(nq):
            for t in range(nq):
                T[side, row, base + s * nq + t] = src[row, s, t]


@njit(inline="always")
def _mirror(T, E, to, base, nn, d):
    # reflecting wall: the other side's trace with the normal velocity negated
    fr = 1 - to
    for row in range(NAUX):
        for l in range(base, base + nn):
            T[to, row, l] = T[fr, row, l]
    for l in range(base, base + nn):
        u = T[to, U0 + d, l]
        T[to, U0 + d, l] = u - (E[d, l] + E[d, l]) * u


@njit(inline="always")
def _dissipation(T, M, E, l, K):
    """Matrix dissipation of lane ``l`` (before the factor one half)."""
    rL = T[0, RHO, l]
    rR = T[1, RHO, l]
    uL0 = T[0, U0, l]
    uL1 = T[0, U1, l]
    uL2 = T[0, U2, l]
    uR0 = T[1, U0, l]
    uR1 = T[1, U1, l]
    uR2 = T[1, U2, l]
    bL = T[0, B, l]
    bR = T[1, B, l]
    e0 = E[0, l]
    e1 = E[1, l]
    e2 = E[2, l]
    rln = M[MRLN, l]
    ps = M[MPS, l]
    ch = M[MCH, l]
    ba = K[HALF] * (bL + bR)
    a0 = K[HALF] * (uL0 + uR0)
    a1 = K[HALF] * (uL1 + uR1)
    a2 = K[HALF] * (uL2 + uR2)
    ud = e0 * a0 + e1 * a1 + e2 * a2
    kin = K[HALF] * (a0 * a0 + a1 * a1 + a2 * a2)
    hh = ch * ch * K[INVGM1] + kin
    w0 = _v1(rR, uR0, uR1, uR2, bR, T[1, LRHO, l], T[1, LB, l], K) \
        - _v1(rL, uL0, uL1, uL2, bL, T[0, LRHO, l], T[0, LB, l], K) \
        + K[TWO] * ba * (T[1, PHI, l] - T[0, PHI, l])
    w1 = K[TWO] * (bR * uR0 - bL * uL0)
    w2 = K[TWO] * (bR * uR1 - bL * uL1)
    w3 = K[TWO] * (bR * uR2 - bL * uL2)
    w4 = -K[TWO] * (bR - bL)
    am = w1 * a0 + w2 * a1 + w3 * a2
    wd = e0 * w1 + e1 * w2 + e2 * w3
    zs = rln * K[INV2G]
    aun = abs(ud)
    al1 = abs(ud - ch) * zs * (w0 + am - ch * wd + (hh - ud * ch) * w4)
    al2 = aun * (rln * K[GM1_G]) * (w0 + am + kin * w4)
    al5 = abs(ud + ch) * zs * (w0 + am + ch * wd + (hh + ud * ch) * w4)
    tz = aun * ps
    t0 = (K[ONE] - e0) * (w1 + a0 * w4) * tz
    t1 = (K[ONE] - e1) * (w2 + a1 * w4) * tz
    t2 = (K[ONE] - e2) * (w3 + a2 * w4) * tz
    y0 = al1 + al2 + al5
    y1 = al1 * (a0 - ch * e0) + al2 * a0 + al5 * (a0 + ch * e0) + t0
    y2 = al1 * (a1 - ch * e1) + al2 * a1 + al5 * (a1 + ch * e1) + t1
    y3 = al1 * (a2 - ch * e2) + al2 * a2 + al5 * (a2 + ch * e2) + t2
    y4 = al1 * (hh - ud * ch) + al2 * kin + al5 * (hh + ud * ch) + t0 * a0 + t1 * a1 + t2 * a2
    y4 = y4 + K[HALF] * (T[0, PHI, l] + T[1, PHI, l]) * y0
    return y0, y1, y2, y3, y4


# The face flux runs as three lane loops over the staged traces. A single loop
# writing all outputs is not vectorized by LLVM (too many runtime alias checks),
# so each loop writes at most four rows.

@njit(**JIT)
def _face_means(T, M, n, K):
    for l in range(n):
        rL = T[0, RHO, l]
        rR = T[1, RHO, l]
        bL = T[0, B, l]
        bR = T[1, B, l]
        rln = ln_mean(rL, rR, T[0, LRHO, l], T[1, LRHO, l], K)
        ps = (K[HALF] * (rL + rR)) / (bL + bR)
        M[MRLN, l] = rln
        M[MIBLN, l] = inv_ln_mean(bL, bR, T[0, LB, l], T[1, LB, l], K)
        M[MPS, l] = ps
        M[MCH, l] = math.sqrt(K[GAMMA] * ps / rln)


@njit(**JIT)
def _face_momentum(T, M, E, n, K, dk):
    for l in range(n):
        y0, y1, y2, y3, _ = _dissipation(T, M, E, l, K)
        a0 = K[HALF] * (T[0, U0, l] + T[1, U0, l])
        a1 = K[HALF] * (T[0, U1, l] + T[1, U1, l])
        a2 = K[HALF] * (T[0, U2, l] + T[1, U2, l])
        ps = M[MPS, l]
        fr = M[MRLN, l] * (E[0, l] * a0 + E[1, l] * a1 + E[2, l] * a2)
        M[MF0, l] = fr - dk * y0
        M[MF1, l] = fr * a0 + E[0, l] * ps - dk * y1
        M[MF2, l] = fr * a1 + E[1, l] * ps - dk * y2
        M[MF3, l] = fr * a2 + E[2, l] * ps - dk * y3


@njit(**JIT)
def _face_energy(T, M, E, n, K, dk):
    for l in range(n):
        _, _, _, _, y4 = _dissipation(T, M, E, l, K)
        uL0 = T[0, U0, l]
        uL1 = T[0, U1, l]
        uL2 = T[0, U2, l]
        uR0 = T[1, U0, l]
        uR1 = T[1, U1, l]
        uR2 = T[1, U2, l]
        ud = K[HALF] * (E[0, l] * (uL0 + uR0) + E[1, l] * (uL1 + uR1) + E[2, l] * (uL2 + uR2))
        rln = M[MRLN, l]
        uu = K[HALF] * (uL0 * uR0 + uL1 * uR1 + uL2 * uR2)
        pb = K[HALF] * (T[0, PHI, l] + T[1, PHI, l])
        ba = K[HALF] * (T[0, B, l] + T[1, B, l])
        M[MF4, l] = rln * ud * (K[INV2GM1] * M[MIBLN, l] + uu + pb) + M[MPS, l] * ud - dk * y4
        M[MH, l] = K[HALF] * ba * rln * (T[1, PHI, l] - T[0, PHI, l])


@njit(inline="always")
def _scatter(buf, T, M, E, base, side, c, nq):
    # lift into one element's face buffer; the gravity term is split by side
    for s in range(nq):
        for t in range(nq):
            lane = base + s * nq + t
            g = M[MH, lane] * T[side, INVB, lane]
            if side == 1:
                g = -g
            buf[0, s, t] = c * M[MF0, lane]
            buf[1, s, t] = c * (M[MF1, lane] + E[0, lane] * g)
            buf[2, s, t] = c * (M[MF2, lane] + E[1, lane] * g)
            buf[3, s, t] = c * (M[MF3, lane] + E[2, lane] * g)
            buf[4, s, t] = c * M[MF4, lane]


@njit(**JIT)
def surface_kernel(traces, gaux, left, right, axis, lift, K, dissipation, face_buf, counters):
    """Evaluate faces and store the lifted contributions in ``face_buf``.

    Faces are processed in batches: traces are gathered into contiguous
    lanes, the flux is computed lane-wise and the result scattered back.
    """
    nq = face_buf.shape[3]
    nf = left.shape[0]
    nn = nq * nq
    per = max(1, BATCH_LANES // nn)
    T = np.empty((2, NAUX, per * nn), dtype=face_buf.dtype)
    E = np.empty((3, per * nn), dtype=face_buf.dtype)
    M = np.empty((NFACE, per * nn), dtype=face_buf.dtype)
    dk = K[HALF] if dissipation else K[ZERO]
    for f0 in range(0, nf, per):
        f1 = min(nf, f0 + per)
        for f in range(f0, f1):
            d = axis[f]
            lsrc = left[f]
            rsrc = right[f]
            base = (f - f0) * nn
            for m in range(3):
                em = K[ONE] if d == m else K[ZERO]
                for l in range(base, base + nn):
                    E[m, l] = em
            # the low side of a face is the high face of its element
            if lsrc >= 0:
                _stage(traces[lsrc, 2 * d + 1], T, 0, base, nq)
            elif lsrc <= GHOST:
                _stage(gaux[GHOST - lsrc], T, 0, base, nq)
            if rsrc >= 0:
                _stage(traces[rsrc, 2 * d], T, 1, base, nq)
            elif rsrc <= GHOST:
                _stage(gaux[GHOST - rsrc], T, 1, base, nq)
            if lsrc == MIRROR:
                _mirror(T, E, 0, base, nn, d)
            elif rsrc == MIRROR:
                _mirror(T, E, 1, base, nn, d)
        n = (f1 - f0) * nn
        _face_means(T, M, n, K)
        _face_momentum(T, M, E, n, K, dk)
        _face_energy(T, M, E, n, K, dk)
        for f in range(f0, f1):
            d = axis[f]
            lsrc = left[f]
            rsrc = right[f]
            base = (f - f0) * nn
            if lsrc >= 0:
                _scatter(face_buf[lsrc, 2 * d + 1], T, M, E, base, 0, -lift[lsrc, d], nq)
            if rsrc >= 0:
                _scatter(face_buf[rsrc, 2 * d], T, M, E, base, 1, lift[rsrc, d], nq)
    n = nf * nq * nq
    counters[SURFACE] += n
    counters[DIVS] += (6 if dissipation else 5) * n
    if dissipation:
        counters[SQRTS] += n


@njit(**JIT)
def commit(out, face_buf):
    """Add face contributions to the volume tendency, faces 0..5 in order."""
    ne, nq = out.shape[0], out.shape[2]
    for e in range(ne):
        for face in range(6):
            axis = face // 2
            side = face % 2
            for v in range(5):
                for s in range(nq):
                    for t in range(nq):
                        c, b, a = _node(nq, axis, side, s, t)
                        out[e, v, c, b, a] += face_buf[e, face, v, s, t]


def lift_factors(mesh, ref, dtype):
    """``G_dd / w_end`` per element and axis (the surface-to-volume lift)."""
    w_end = float(np.asarray(ref.weights, dtype=np.float64)[-1])
    g = np.stack([mesh.metric[:, a, a] for a in range(3)], axis=1)
    return (g / w_end).astype(dtype)
