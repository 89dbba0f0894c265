"""Pairings of quadrature nodes along a tensor line for the half sweep.

Node indices are 1-based in :class:`FluxSchedule` to match the usual
statement of the index formula; :meth:`FluxSchedule.pairs` returns 0-based
arrays for the kernels.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np


class ScheduleKind(str, Enum):
    FULL = "full"  # every ordered pair j != i
    UPPER = "upper"  # j > i only
    INDEXING = "indexing"  # cyclic partners, loop bound depends on i for odd N
    WEIGHTED = "weighted"  # constant loop bound, antipodal pairs weighted 1/2


def loop_bound(nq, i):
    """Upper limit ``N_l`` of ``l = 2..N_l`` for node ``i`` (1-based)."""
    order = nq - 1
    if order % 2 == 0:
        return nq // 2 + 1
    return nq // 2 + 1 if i <= nq // 2 else nq // 2


@dataclass(frozen=True)
class FluxSchedule:
    nq: int
    kind: ScheduleKind
    partners: tuple  # partners[i-1] = ((j, weight), ...)

    @property
    def num_pairs(self):
        return sum(len(p) for p in self.partners)

    @property
    def symmetric(self):
        return self.kind is not ScheduleKind.FULL

    def list_lengths(self):
        return [len(p) for p in self.partners]

    def pair_weights(self):
        """Total weight per unordered pair ``(min, max)`` as exact fractions."""
        total = {}
        for i, plist in enumerate(self.partners, start=1):
            for j, w in plist:
                key = (min(i, j), max(i, j))
                total[key] = total.get(key, Fraction(0)) + w
        return total

    def pairs(self, dtype=np.float64):
        """Flat 0-based ``(i, j, weight)`` arrays in evaluation order.

        Cyclic schedules are emitted step by step (every node's ``l``-th
        partner, then the next ``l``), the order in which lockstep threads
        evaluate them; consecutive pairs then share a node. The other kinds
        run node by node.
        """
        if self.kind in (ScheduleKind.INDEXING, ScheduleKind.WEIGHTED):
            longest = max(self.list_lengths())
            order = [(i, plist[l]) for l in range(longest) for i, plist in enumerate(self.partners)
                     if l < len(plist)]
        else:
            order = [(i, pair) for i, plist in enumerate(self.partners) for pair in plist]
        pi, pj, pw = [], [], []
        for i, (j, w) in order:
            pi.append(i)
            pj.append(j - 1)
            pw.append(float(w))
        return (np.array(pi, dtype=np.int64), np.array(pj, dtype=np.int64),
                np.array(pw, dtype=dtype))


def build_schedule(nq, kind=ScheduleKind.WEIGHTED):
    if nq < 2:
        raise ValueError(f"a flux schedule needs at least two nodes per line, got N_q={nq}")
    kind = ScheduleKind(kind)
    one, half = Fraction(1), Fraction(1, 2)
    partners = []
    for i in range(1, nq + 1):
        if kind is ScheduleKind.FULL:
            plist = [(j, one) for j in range(1, nq + 1) if j != i]
        elif kind is ScheduleKind.UPPER:
            plist = [(j, one) for j in range(i + 1, nq + 1)]
        else:
            n_l = loop_bound(nq, i) if kind is ScheduleKind.INDEXING else nq // 2 + 1
            plist = []
            for l in range(2, n_l + 1):
                j = 1 + (i + l - 2) % nq
                antipodal = nq % 2 == 0 and (j - i) % nq == nq // 2
                w = half if kind is ScheduleKind.WEIGHTED and antipodal else one
                plist.append((j, w))
        partners.append(tuple(plist))
    return FluxSchedule(nq, kind, tuple(partners))


def weighted_evaluations(nq):
    """Closed-form two-point evaluations per line for the weighted schedule."""
    return nq * (nq // 2)
