import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rislink.exceptions import DimensionMismatch, RankDeficient, ZeroChannel
from rislink.precode import (
    SolverParams,
    mrt_precoder,
    rate_coefficients,
    sinr,
    sinr_from_matrix,
    solve_wsr,
    solve_wsr_clustered,
    theta_gradient,
    weighted_sum_rate,
    wmmse_update,
    zf_precoder,
)
from rislink.reflect import Clustering, FeasibilitySet, ReflectionConfig
from rislink.scene import ChannelSet, Scenario, composite_channel, synthesize_channels

from conftest import random_channels, rayleigh, unit_configs

FAST = SolverParams(restarts=2, max_outer_iters=40)


def _scalar(h_bu, h_br, h_ru):
    return ChannelSet(H_BU=np.atleast_2d(h_bu), H_BR=tuple(np.atleast_2d(b) for b in h_br),
                      H_RU=tuple(np.atleast_2d(r) for r in h_ru))


# -- evaluation ----------------------------------------------------------------

def test_sinr_single_user(rng):
    ch = random_channels(rng, 3, 1, Q=(2,))
    P = rng.standard_normal((3, 1)) + 0j
    e = composite_channel(ch, unit_configs(ch))[0]
    assert sinr(ch, unit_configs(ch), P, 0, noise=0.5) == pytest.approx(abs(e @ P[:, 0]) ** 2 / 0.5)


def test_sinr_without_interferers(rng):
    ch = random_channels(rng, 3, 2, Q=(2,))
    P = np.zeros((3, 2), complex)
    P[:, 0] = [1, 2j, -1]
    e = composite_channel(ch, unit_configs(ch))[0]
    assert sinr(ch, unit_configs(ch), P, 0, noise=0.25) == pytest.approx(abs(e @ P[:, 0]) ** 2 / 0.25)


def test_sinr_checks_dimensions(rng):
    ch = random_channels(rng, 3, 2)
    with pytest.raises(DimensionMismatch):
        sinr(ch, unit_configs(ch), np.ones((2, 2)), 0, noise=1.0)
    with pytest.raises(DimensionMismatch):
        sinr(ch, unit_configs(ch), np.ones((3, 2)), 2, noise=1.0)


def test_sinr_explicit_formula(rng):
    H = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    P = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    noise = np.array([0.1, 0.2, 0.3])
    got = sinr_from_matrix(H, P, noise)
    for k in range(3):
        sig = abs(H[k] @ P[:, k]) ** 2
        interf = sum(abs(H[k] @ P[:, j]) ** 2 for j in range(3) if j != k)
        assert got[k] == pytest.approx(sig / (interf + noise[k]), rel=1e-12)


def test_rate_zero_power(rng):
    ch = random_channels(rng, 3, 2)
    assert weighted_sum_rate(ch, unit_configs(ch), np.zeros((3, 2)), noise=1.0) == 0.0


def test_rate_one_bit():
    ch = _scalar(1.0, [], [])
    assert weighted_sum_rate(ch, [], np.ones((1, 1)), weights=[1.0], noise=1.0) == 1.0


@given(st.floats(0.01, 100))
def test_rate_linear_in_weights(c):
    rng = np.random.default_rng(3)
    ch = random_channels(rng, 3, 2)
    P = rng.standard_normal((3, 2)) + 0j
    w = np.array([0.3, 1.7])
    base = weighted_sum_rate(ch, unit_configs(ch), P, w, noise=1.0)
    assert weighted_sum_rate(ch, unit_configs(ch), P, c * w, noise=1.0) == pytest.approx(c * base)


# -- baselines -----------------------------------------------------------------

def test_mrt_real_scalar():
    P = mrt_precoder(_scalar(2.0, [], []), [], 1.0)
    assert P[0, 0] == pytest.approx(1.0)


def test_mrt_conjugates():
    ch = ChannelSet(H_BU=np.array([[1.0, 1j]]))
    np.testing.assert_allclose(mrt_precoder(ch, [], 1.0)[:, 0], np.array([1, -1j]) / np.sqrt(2))


def test_mrt_zero_channel():
    with pytest.raises(ZeroChannel):
        mrt_precoder(ChannelSet(H_BU=np.zeros((1, 2))), [], 1.0)


def test_zf_identity():
    np.testing.assert_allclose(zf_precoder(ChannelSet(H_BU=np.eye(3)), [], 3.0), np.eye(3))


def test_zf_rank_deficient():
    with pytest.raises(RankDeficient):
        zf_precoder(ChannelSet(H_BU=np.ones((2, 3))), [], 1.0)


def test_zf_nulls_interference(rng):
    ch = random_channels(rng, 4, 2, Q=(3,))
    P = zf_precoder(ch, unit_configs(ch), 2.0)
    HP = composite_channel(ch, unit_configs(ch)) @ P
    assert np.max(np.abs(HP - np.diag(np.diag(HP)))) < 1e-10
    assert np.sum(np.abs(P) ** 2) == pytest.approx(2.0)


# -- gradients -----------------------------------------------------------------

def test_gradients_match_finite_differences(rng):
    ch = random_channels(rng, 3, 2, Q=(4,))
    noise, w = np.array([0.5, 0.8]), np.array([1.0, 2.0])
    P = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    th = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))

    def f(P_, th_):
        return weighted_sum_rate(ch, [th_], P_, w, noise)

    H = composite_channel(ch, [th])
    Y = H @ P
    C = rate_coefficients(Y, noise, w)
    gP = H.conj().T @ (C * Y)
    gT = theta_gradient(ch.H_RU[0], C * Y, ch.H_BR[0] @ P)
    h = 1e-6
    for idx in [(0, 0), (2, 1)]:
        E = np.zeros_like(P)
        E[idx] = 1.0
        dre = (f(P + h * E, th) - f(P - h * E, th)) / (2 * h)
        dim = (f(P + 1j * h * E, th) - f(P - 1j * h * E, th)) / (2 * h)
        # Wirtinger convention: df = 2 Re(conj(g) dP)
        assert complex(dre, dim) == pytest.approx(2 * gP[idx], rel=1e-5, abs=1e-8)
    for q in range(4):
        e = np.zeros(4)
        e[q] = 1.0
        dre = (f(P, th + h * e) - f(P, th - h * e)) / (2 * h)
        dim = (f(P, th + 1j * h * e) - f(P, th - 1j * h * e)) / (2 * h)
        assert complex(dre, dim) == pytest.approx(2 * gT[q], rel=1e-5, abs=1e-8)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_wmmse_step_never_decreases_rate(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    P = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    P *= np.sqrt(2.0 / np.sum(np.abs(P) ** 2))
    noise, w = np.array([0.1, 0.5, 1.0]), np.array([1.0, 0.5, 2.0])

    def rate(P_):
        return float(np.sum(w * np.log2(1 + sinr_from_matrix(H, P_, noise))))

    Pn = wmmse_update(H, P, noise, w, 2.0)
    assert np.sum(np.abs(Pn) ** 2) <= 2.0 * (1 + 1e-9)
    assert rate(Pn) >= rate(P) - 1e-9


# -- solve_wsr -----------------------------------------------------------------

def test_single_user_los_closed_form():
    sc = Scenario.simple(1, 1, Q=(6,), seed=4, noise_power=1e-8)
    ch = synthesize_channels(sc)
    sol = solve_wsr(ch, sc)
    g = ch.H_RU[0][0] * ch.H_BR[0][:, 0]
    opt = np.log2(1 + sc.power_budget * (abs(ch.H_BU[0, 0]) + np.sum(np.abs(g))) ** 2 / 1e-8)
    assert sol.objective == pytest.approx(opt, rel=1e-6)


def test_discrete_matches_enumeration():
    sc, ch = rayleigh(1, 1, Q=(4,), seed=2, feasibility=FeasibilitySet.discrete(2))
    sol = solve_wsr(ch, sc)
    best = max(
        weighted_sum_rate(ch, [np.array(t)], np.ones((1, 1)) * np.sqrt(sc.power_budget))
        for t in itertools.product([1.0, -1.0], repeat=4)
    )
    # with L=1 the matched filter is a phase, so |p|^2 = budget reaches the optimum
    assert sol.objective == pytest.approx(best, abs=1e-12)


def test_zero_budget():
    sc, ch = rayleigh(3, 2, power_budget=0.0)
    sol = solve_wsr(ch, sc)
    assert sol.objective == 0.0 and not np.any(sol.P)


@pytest.mark.parametrize("fs", [FeasibilitySet.general(), FeasibilitySet.continuous(),
                                FeasibilitySet.discrete(4)], ids=lambda f: f.kind)
def test_solution_invariants(fs, tmp_path):
    sc, ch = rayleigh(4, 3, Q=(6, 4), seed=1, feasibility=fs, noise_power=1e-8)
    params = SolverParams(restarts=2, max_outer_iters=30, trace_path=str(tmp_path / "t.csv"))
    sol = solve_wsr(ch, sc, params)
    assert sol.power <= sc.power_budget + 1e-9
    for c in sol.configs:
        ReflectionConfig(c.theta, fs)
    assert np.all(np.diff(sol.iterate_trace) >= -1e-9)
    assert sol.objective == pytest.approx(weighted_sum_rate(ch, sol.configs, sol.P), rel=1e-12)
    assert sol.objective >= sol.initial_objective
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,objective,min_slack"
    assert len(lines) == len(sol.iterate_trace) + 1


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 1000), st.sampled_from([0.5, 2.0, 4.0]))
def test_weight_scaling_keeps_argmax(seed, c):
    sc, ch = rayleigh(3, 2, Q=(4,), seed=seed, noise_power=1e-7)
    a = solve_wsr(ch, sc, FAST)
    b = solve_wsr(ch, sc, FAST, weights=c * np.asarray(sc.weights))
    # power-of-two scaling is exact in floating point, so the iterates coincide
    np.testing.assert_array_equal(a.P, b.P)
    assert b.objective == c * a.objective


def test_weight_scaling_general_factor():
    sc, ch = rayleigh(3, 2, Q=(4,), seed=5, noise_power=1e-7)
    a = solve_wsr(ch, sc, FAST)
    b = solve_wsr(ch, sc, FAST, weights=3.0 * np.asarray(sc.weights))
    np.testing.assert_allclose(b.P, a.P, atol=1e-9)
    assert b.objective == pytest.approx(3.0 * a.objective, rel=1e-12)


# -- clustered -----------------------------------------------------------------

def test_identity_clustering_equals_unclustered():
    sc, ch = rayleigh(3, 2, Q=(4,), seed=6, noise_power=1e-7)
    a = solve_wsr(ch, sc, FAST)
    b = solve_wsr_clustered(ch, sc, clustering=Clustering.identity(4), params=FAST)
    assert b.objective == pytest.approx(a.objective, rel=1e-6)


def test_single_cluster_cancelling_pair():
    ch = ChannelSet(H_BU=[[0.3]], H_BR=([[1.0], [1.0]],), H_RU=([[1.0, -1.0]],))
    fs = FeasibilitySet.discrete(2)
    sol = solve_wsr_clustered(ch, clustering=Clustering([0, 0], 1), params=FAST,
                              feasibilities=[fs], power_budget=1.0, noise=1.0, weights=[1.0])
    assert sol.objective == pytest.approx(np.log2(1 + 0.09), abs=1e-12)
    assert sol.configs[0].theta[0] == sol.configs[0].theta[1]


def test_cluster_budget_respected():
    sc, ch = rayleigh(3, 2, Q=(6,), seed=7, noise_power=1e-7)
    sol = solve_wsr_clustered(ch, sc, R=2, params=FAST)
    cl, th = sol.clusterings[0], sol.configs[0].theta
    assert cl.R == 2
    for r in range(cl.R):
        assert np.all(th[cl.members(r)] == th[cl.members(r)[0]])


def test_one_cluster_never_beats_full():
    for seed in range(3):
        sc, ch = rayleigh(3, 2, Q=(4,), seed=seed, noise_power=1e-7)
        one = solve_wsr_clustered(ch, sc, R=1, params=FAST)
        full = solve_wsr(ch, sc, FAST, init=(one.P, [c.theta for c in one.configs]))
        assert one.objective <= full.objective + 1e-12
