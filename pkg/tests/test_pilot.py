import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rislink.exceptions import (
    DegenerateObjective,
    IndexOutOfRange,
    InvalidScenario,
    SearchSpaceTooLarge,
)
from rislink.pilot import PilotAssignment, PilotPool, assign_pilots, pilot_sir, ratio_table
from rislink.scene import ChannelSet

from conftest import unit_configs


def _cn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _two_panel(rng, L=4, K=3, Q=(5, 6)):
    return ChannelSet(H_BU=np.zeros((K, L)), H_BR=tuple(_cn(rng, q, L) for q in Q),
                      H_RU=tuple(_cn(rng, K, q) for q in Q))


def _serving(K, N=2):
    return np.arange(K) % N


def test_pool_orthonormality():
    assert PilotPool.dft(4, 4).pilots.shape == (4, 4)
    PilotPool.random(5, 3, np.random.default_rng(0))
    with pytest.raises(InvalidScenario):
        PilotPool([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(InvalidScenario):
        PilotPool.dft(3, 4)


def test_identical_panels_ratio_one(rng):
    A, B = _cn(rng, 5, 4), _cn(rng, 2, 5)
    ch = ChannelSet(H_BU=np.zeros((2, 4)), H_BR=(A, A), H_RU=(B, B))
    pool = PilotPool.dft(4, 2)
    for k in range(2):
        assert pilot_sir(ch, unit_configs(ch), [1, 2], k, 0, pool) == pytest.approx(1.0, rel=1e-12)


def test_single_panel_is_degenerate(rng):
    ch = ChannelSet(H_BU=np.zeros((1, 2)), H_BR=(_cn(rng, 3, 2),), H_RU=(_cn(rng, 1, 3),))
    with pytest.raises(DegenerateObjective):
        pilot_sir(ch, unit_configs(ch), [1], 0, 0, PilotPool.dft(2, 1))
    with pytest.raises(DegenerateObjective):
        assign_pilots(ch, unit_configs(ch), PilotPool.dft(2, 1))


def test_uncontaminated_user_is_flagged(rng):
    ch = _two_panel(rng, K=2)
    H_RU = (ch.H_RU[0], ch.H_RU[1].copy())
    H_RU[1][0] = 0.0
    ch = ChannelSet(H_BU=ch.H_BU, H_BR=ch.H_BR, H_RU=H_RU)
    pool = PilotPool.dft(4, 2)
    assert pilot_sir(ch, unit_configs(ch), [1, 2], 0, 0, pool) == np.inf
    res = assign_pilots(ch, unit_configs(ch), pool, serving_map=[0, 1])
    assert 0 in res.flagged and np.isinf(res.ratios[0])


def test_no_signal_no_contamination_is_zero(rng):
    ch = _two_panel(rng, K=1)
    ch = ChannelSet(H_BU=ch.H_BU, H_BR=ch.H_BR, H_RU=tuple(np.zeros_like(h) for h in ch.H_RU))
    assert pilot_sir(ch, unit_configs(ch), [1], 0, 0, PilotPool.dft(4, 1)) == 0.0


def test_single_user_single_pilot(rng):
    ch = _two_panel(rng, K=1)
    res = assign_pilots(ch, unit_configs(ch), PilotPool.dft(4, 1), serving_map=[0])
    assert res.map.tolist() == [1]


def test_pilot_indices_are_one_based():
    with pytest.raises(IndexOutOfRange):
        PilotAssignment(map=[0, 1], score=0.0)


def test_pilot_sir_index_checks(rng):
    ch = _two_panel(rng, K=2)
    pool = PilotPool.dft(4, 2)
    cf = unit_configs(ch)
    with pytest.raises(IndexOutOfRange):
        pilot_sir(ch, cf, [1, 3], 1, 0, pool)
    with pytest.raises(IndexOutOfRange):
        pilot_sir(ch, cf, [1, 2], 2, 0, pool)
    with pytest.raises(IndexOutOfRange):
        pilot_sir(ch, cf, [1, 2], 0, 2, pool)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exhaustive_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    K, count = 3, 3
    ch = _two_panel(rng, L=4, K=K)
    th = [np.exp(1j * rng.uniform(0, 2 * np.pi, q)) for q in ch.Q]
    pool = PilotPool.random(4, count, rng)
    serving = _serving(K)
    res = assign_pilots(ch, th, pool, serving_map=serving)
    # independent route: per-user ratios straight from pilot_sir, plain enumeration
    best = max(
        min(pilot_sir(ch, th, m, k, serving[k], pool) for k in range(K))
        for m in itertools.product(range(1, count + 1), repeat=K)
    )
    assert res.score == pytest.approx(best, rel=1e-12)
    assert min(pilot_sir(ch, th, res.map, k, serving[k], pool) for k in range(K)) == pytest.approx(
        res.score, rel=1e-12)
    greedy = assign_pilots(ch, th, pool, serving_map=serving, mode="greedy")
    assert greedy.score <= res.score + 1e-12


def test_ratio_table_matches_pilot_sir(rng):
    ch = _two_panel(rng, L=4, K=3)
    pool = PilotPool.dft(4, 4)
    serving = _serving(3)
    R = ratio_table(ch, unit_configs(ch), pool, serving)
    for k in range(3):
        for p in range(4):
            m = [1, 1, 1]
            m[k] = p + 1
            assert R[k, p] == pytest.approx(pilot_sir(ch, unit_configs(ch), m, k, serving[k], pool),
                                            rel=1e-12)


def test_pool_permutation_keeps_score(rng):
    ch = _two_panel(rng, L=5, K=3)
    pool = PilotPool.random(5, 4, rng)
    perm = PilotPool(pool.pilots[[2, 0, 3, 1]])
    a = assign_pilots(ch, unit_configs(ch), pool, serving_map=_serving(3))
    b = assign_pilots(ch, unit_configs(ch), perm, serving_map=_serving(3))
    assert a.score == pytest.approx(b.score, rel=1e-12)


@pytest.mark.parametrize("c", [1e-3, 7.0])
def test_channel_scaling_invariance(rng, c):
    ch = _two_panel(rng, K=2)
    scaled = ChannelSet(H_BU=ch.H_BU, H_BR=tuple(c * h for h in ch.H_BR), H_RU=ch.H_RU)
    pool = PilotPool.dft(4, 2)
    a = assign_pilots(ch, unit_configs(ch), pool, serving_map=[0, 1])
    b = assign_pilots(scaled, unit_configs(ch), pool, serving_map=[0, 1])
    assert a.map.tolist() == b.map.tolist()
    assert a.score == pytest.approx(b.score, rel=1e-9)


def test_search_cap(rng):
    ch = _two_panel(rng, L=8, K=8)
    pool = PilotPool.dft(8, 8)
    with pytest.raises(SearchSpaceTooLarge):
        assign_pilots(ch, unit_configs(ch), pool, serving_map=_serving(8))
    # greedy has no cap
    res = assign_pilots(ch, unit_configs(ch), pool, serving_map=_serving(8), mode="greedy")
    assert res.map.shape == (8,)


def test_non_unit_reflection_rejected(rng):
    ch = _two_panel(rng, K=2)
    th = [0.5 * np.ones(q) for q in ch.Q]
    with pytest.raises(InvalidScenario):
        assign_pilots(ch, th, PilotPool.dft(4, 2), serving_map=[0, 1])


def test_csv_layout(rng):
    ch = _two_panel(rng, K=2)
    res = assign_pilots(ch, unit_configs(ch), PilotPool.dft(4, 2), serving_map=[0, 1])
    lines = res.to_csv().splitlines()
    assert lines[0] == "user,pilot,ratio"
    assert len(lines) == 3
    user, pilot, ratio = lines[1].split(",")
    assert (int(user), int(pilot), float(ratio)) == (0, int(res.map[0]), float(res.ratios[0]))
