from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from esdg.kernels import ScheduleKind, build_schedule, loop_bound, weighted_evaluations

NQS = range(2, 9)


@pytest.mark.parametrize("kind", [ScheduleKind.INDEXING, ScheduleKind.WEIGHTED, ScheduleKind.UPPER])
@pytest.mark.parametrize("nq", NQS)
def test_every_pair_has_weight_exactly_one(nq, kind):
    s = build_schedule(nq, kind)
    weights = s.pair_weights()
    assert set(weights) == set(combinations(range(1, nq + 1), 2))
    assert all(w == Fraction(1) for w in weights.values())
    assert all(j != i for i, plist in enumerate(s.partners, 1) for j, _ in plist)


@pytest.mark.parametrize("nq", NQS)
def test_full_sweep_visits_every_ordered_pair(nq):
    s = build_schedule(nq, ScheduleKind.FULL)
    assert s.num_pairs == nq * (nq - 1)
    assert not s.symmetric


def test_nq5_pairs_match_the_cyclic_index_formula():
    listed = [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (4, 5), (4, 1), (5, 1), (5, 2)]
    s = build_schedule(5, ScheduleKind.INDEXING)
    got = [(i, j) for i, plist in enumerate(s.partners, 1) for j, _ in plist]
    assert got == listed
    assert {frozenset(p) for p in got} == {frozenset(p) for p in combinations(range(1, 6), 2)}
    assert s.list_lengths() == [2] * 5
    assert build_schedule(5, ScheduleKind.WEIGHTED).partners == s.partners


def test_nq4_indexing_split():
    s = build_schedule(4, ScheduleKind.INDEXING)
    assert [loop_bound(4, i) for i in range(1, 5)] == [3, 3, 2, 2]
    assert s.list_lengths() == [2, 2, 1, 1]
    assert s.num_pairs == 6


def test_nq2_single_pair():
    for kind in (ScheduleKind.INDEXING, ScheduleKind.UPPER):
        assert build_schedule(2, kind).pair_weights() == {(1, 2): Fraction(1)}


@pytest.mark.parametrize("nq", NQS)
def test_balance(nq):
    ind = build_schedule(nq, ScheduleKind.INDEXING).list_lengths()
    assert max(ind) - min(ind) <= (0 if nq % 2 else 1)
    wtd = build_schedule(nq, ScheduleKind.WEIGHTED)
    assert wtd.list_lengths() == [nq // 2] * nq
    assert wtd.num_pairs == weighted_evaluations(nq)
    halves = [w for plist in wtd.partners for _, w in plist if w != 1]
    assert halves == ([Fraction(1, 2)] * nq if nq % 2 == 0 else [])


def test_cyclic_pairs_run_in_lockstep_order():
    pi, pj, _ = build_schedule(5, ScheduleKind.WEIGHTED).pairs()
    assert pi.tolist() == [0, 1, 2, 3, 4, 0, 1, 2, 3, 4]
    assert pj.tolist() == [1, 2, 3, 4, 0, 2, 3, 4, 0, 1]
    pi, pj, _ = build_schedule(4, ScheduleKind.INDEXING).pairs()
    assert list(zip(pi.tolist(), pj.tolist())) == [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3)]
    pi, _, _ = build_schedule(4, ScheduleKind.UPPER).pairs()
    assert pi.tolist() == [0, 0, 0, 1, 1, 2]


def test_pairs_arrays_are_zero_based():
    pi, pj, pw = build_schedule(4, ScheduleKind.WEIGHTED).pairs(np.float32)
    assert pi.min() == 0 and pj.max() == 3
    assert pw.dtype == np.float32
    assert sorted(set(pw.tolist())) == [0.5, 1.0]


@pytest.mark.parametrize("nq", [0, 1])
def test_rejects_short_lines(nq):
    with pytest.raises(ValueError):
        build_schedule(nq)
