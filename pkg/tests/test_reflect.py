import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rislink.exceptions import IndexOutOfRange, InvalidScenario
from rislink.reflect import (
    Clustering,
    FeasibilitySet,
    ReflectionConfig,
    control_payload_bits,
    expand,
    phase_grid,
    project,
    random_feasible,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
cplx = st.builds(complex, finite, finite)
vectors = st.lists(cplx, min_size=1, max_size=16).map(lambda v: np.array(v, dtype=complex))
sets = st.one_of(
    st.just(FeasibilitySet.general()),
    st.just(FeasibilitySet.continuous()),
    st.integers(2, 16).map(FeasibilitySet.discrete),
)


def test_general_keeps_interior_point():
    th = 0.5 * np.exp(1j * np.pi / 3)
    assert project(np.array([th]), FeasibilitySet.general())[0] == th


def test_continuous_normalizes_magnitude():
    out = project(np.array([3 * np.exp(1j * np.pi / 3)]), FeasibilitySet.continuous())
    assert out[0] == pytest.approx(np.exp(1j * np.pi / 3), abs=1e-15)


def test_continuous_zero_maps_to_one():
    assert project(np.zeros(2), FeasibilitySet.continuous()).tolist() == [1, 1]


def test_discrete_nearest_phase_just_past_midpoint():
    theta = np.exp(1j * (np.pi / 4 + 0.01))
    out = project(np.array([theta]), FeasibilitySet.discrete(4))[0]
    # independent check: enumerate every grid distance
    grid = np.exp(2j * np.pi * np.arange(4) / 4)
    want = grid[np.argmin(np.abs(np.angle(grid * np.conj(theta))))]
    assert out == pytest.approx(want, abs=1e-15)
    assert out == 1j


def test_discrete_tie_goes_to_smaller_index():
    out = project(np.array([np.exp(1j * np.pi / 4)]), FeasibilitySet.discrete(4))
    assert out[0] == 1


@given(vectors, sets)
def test_project_is_idempotent(theta, fs):
    once = project(theta, fs)
    np.testing.assert_allclose(project(once, fs), once, atol=1e-12)


@given(vectors, sets)
def test_project_lands_in_set(theta, fs):
    out = project(theta, fs)
    assert np.all(fs.contains(out))
    ReflectionConfig(out, fs)


@given(vectors, st.integers(2, 16))
def test_discrete_output_is_exact_grid_point(theta, tau):
    out = project(theta, FeasibilitySet.discrete(tau))
    assert np.all(np.isin(out, phase_grid(tau)))


def test_phase_grid_axis_points_exact():
    assert phase_grid(2).tolist() == [1, -1]
    assert phase_grid(4).tolist() == [1, 1j, -1, -1j]


def test_discrete_needs_tau():
    with pytest.raises(InvalidScenario):
        FeasibilitySet("discrete_phase", 1)


def test_config_rejects_infeasible():
    with pytest.raises(InvalidScenario):
        ReflectionConfig(np.array([2.0]), FeasibilitySet.general())
    with pytest.raises(InvalidScenario):
        ReflectionConfig(np.array([0.5]), FeasibilitySet.continuous())
    with pytest.raises(InvalidScenario):
        ReflectionConfig(np.array([np.exp(0.1j)]), FeasibilitySet.discrete(4))


def test_config_csv_rows():
    cfg = ReflectionConfig(np.array([1.0, -1.0]), FeasibilitySet.discrete(2))
    lines = cfg.to_csv().splitlines()
    assert lines[0] == "index,eta,phi"
    idx, eta, phi = lines[2].split(",")
    assert (int(idx), float(eta), float(phi)) == (1, 1.0, pytest.approx(np.pi))


def test_random_feasible_members(rng):
    for fs in (FeasibilitySet.general(), FeasibilitySet.continuous(), FeasibilitySet.discrete(8)):
        assert np.all(fs.contains(random_feasible(50, fs, rng)))


def test_expand_identity():
    th = np.exp(1j * np.arange(5))
    np.testing.assert_array_equal(expand(th, Clustering.identity(5)), th)


def test_expand_broadcast():
    out = expand(np.array([np.exp(1j * np.pi)]), Clustering(np.zeros(3, int), 1))
    assert out.tolist() == [np.exp(1j * np.pi)] * 3


def test_expand_gather():
    a, b = 1 + 0j, 1j
    assert expand(np.array([a, b]), Clustering([0, 1, 0], 2)).tolist() == [a, b, a]


def test_expand_out_of_range():
    with pytest.raises(IndexOutOfRange):
        expand(np.array([1.0]), Clustering([0, 1, 0], 2))
    with pytest.raises(IndexOutOfRange):
        Clustering([0, 2], 2)


def test_clustering_partition_checks():
    with pytest.raises(InvalidScenario):
        Clustering([0, 0, 0], 2)


@given(st.integers(1, 40).flatmap(lambda q: st.tuples(st.just(q), st.integers(1, q))))
def test_contiguous_is_partition(qr):
    q, r = qr
    cl = Clustering.contiguous(q, r)
    sizes = np.bincount(cl.assignment, minlength=r)
    assert sizes.sum() == q and sizes.min() >= 1 and sizes.max() - sizes.min() <= 1
    assert np.all(np.diff(cl.assignment) >= 0)


@settings(max_examples=50)
@given(st.integers(1, 12).flatmap(lambda q: st.tuples(st.just(q), st.integers(1, q))),
       sets, st.integers(0, 2**32 - 1))
def test_expanded_config_is_feasible(qr, fs, seed):
    q, r = qr
    th = random_feasible(r, fs, np.random.default_rng(seed))
    ReflectionConfig(expand(th, Clustering.contiguous(q, r)), fs)


@pytest.mark.parametrize("q,tau,r,bits", [(256, 4, None, 512), (256, 4, 16, 32), (1, 2, None, 1)])
def test_payload_bits(q, tau, r, bits):
    fs = FeasibilitySet.discrete(tau)
    cfg = ReflectionConfig(np.ones(q), fs)
    cl = Clustering.contiguous(q, r) if r else None
    assert control_payload_bits(cfg, cl) == bits


def test_payload_bits_continuous_needs_depth():
    cfg = ReflectionConfig.unit(4)
    with pytest.raises(ValueError):
        control_payload_bits(cfg)
    assert control_payload_bits(cfg, bits_per_coefficient=6) == 24
