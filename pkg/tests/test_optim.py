import copy

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import scalar_nadam
from pqcnn.optim import NadamState, NonFiniteGradientError, make_batches, nadam_step


def test_zero_gradient_no_update():
    p = [np.array([1.0, -2.0]), np.array([[0.5]])]
    before = [x.copy() for x in p]
    state = NadamState.for_params(p)
    nadam_step(p, [np.zeros(2), np.zeros((1, 1))], state)
    for a, b in zip(p, before):
        np.testing.assert_array_equal(a, b)
    assert state.t == 1


def test_first_step_matches_scalar_reference():
    p = [np.array([0.0])]
    state = NadamState.for_params(p)
    nadam_step(p, [np.array([1.0])], state)
    assert p[0][0] == pytest.approx(scalar_nadam(0.0, [1.0]), rel=1e-14, abs=1e-18)


def test_two_steps_match_scalar_reference():
    p = [np.array([0.3])]
    state = NadamState.for_params(p, lr=0.01)
    nadam_step(p, [np.array([0.7])], state)
    nadam_step(p, [np.array([-0.2])], state)
    assert state.t == 2
    assert p[0][0] == pytest.approx(scalar_nadam(0.3, [0.7, -0.2], lr=0.01), rel=1e-14)


@given(grads=st.lists(st.floats(-10, 10), min_size=1, max_size=20), theta=st.floats(-5, 5))
def test_trajectory_matches_scalar_reference(grads, theta):
    p = [np.array([theta])]
    state = NadamState.for_params(p)
    for g in grads:
        nadam_step(p, [np.array([g])], state)
    assert p[0][0] == pytest.approx(scalar_nadam(theta, grads), rel=1e-12, abs=1e-12)
    assert np.all(state.v[0] >= 0)


def test_copied_state_diverges_only_by_recursion():
    p1 = [np.array([1.0, 2.0])]
    s1 = NadamState.for_params(p1)
    g = [np.array([0.5, -0.5])]
    nadam_step(p1, g, s1)
    p2, s2 = copy.deepcopy(p1), copy.deepcopy(s1)
    nadam_step(p1, g, s1)
    nadam_step(p2, g, s2)
    np.testing.assert_array_equal(p1[0], p2[0])
    for a, b in zip(s1.m + s1.v, s2.m + s2.v):
        np.testing.assert_array_equal(a, b)
    expected = [scalar_nadam(x, [gi, gi]) for x, gi in zip([1.0, 2.0], [0.5, -0.5])]
    np.testing.assert_allclose(p1[0], expected, rtol=1e-14)


def test_scaled_gradient_same_direction(rng):
    g = rng.normal(size=10)
    pa, pb = [np.zeros(10)], [np.zeros(10)]
    nadam_step(pa, [g], NadamState.for_params(pa))
    nadam_step(pb, [7.5 * g], NadamState.for_params(pb))
    np.testing.assert_array_equal(np.sign(pa[0]), np.sign(pb[0]))


def test_non_finite_aborts(rng):
    p = [np.ones(3), np.ones(2)]
    state = NadamState.for_params(p)
    with pytest.raises(NonFiniteGradientError):
        nadam_step(p, [np.ones(3), np.array([1.0, np.nan])], state)
    assert state.t == 0
    np.testing.assert_array_equal(p[0], np.ones(3))
    assert not state.m[0].any()


def test_shape_mismatch():
    p = [np.ones(3)]
    with pytest.raises(ValueError):
        nadam_step(p, [np.ones(4)], NadamState.for_params(p))


def test_state_serialization_resumes_bitwise(rng):
    grads = [rng.normal(size=(2, 3)) for _ in range(6)]
    p = [np.zeros((2, 3))]
    state = NadamState.for_params(p, lr=0.005)
    for g in grads[:3]:
        nadam_step(p, [g], state)
    saved_p, blob = p[0].copy(), state.to_bytes()
    for g in grads[3:]:
        nadam_step(p, [g], state)
    q = [saved_p]
    restored = NadamState.from_bytes(blob)
    assert restored.t == 3 and restored.lr == 0.005
    for g in grads[3:]:
        nadam_step(q, [g], restored)
    assert q[0].tobytes() == p[0].tobytes()


def test_batches_sizes():
    batches = make_batches(np.arange(10), 3, np.random.default_rng(0))
    assert [len(b) for b in batches] == [3, 3, 3, 1]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


def test_batches_single():
    batches = make_batches(np.arange(7), 50, np.random.default_rng(0))
    assert len(batches) == 1 and sorted(batches[0].tolist()) == list(range(7))


def test_batches_deterministic():
    a = make_batches(np.arange(100), 8, np.random.default_rng(4))
    b = make_batches(np.arange(100), 8, np.random.default_rng(4))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_batches_invalid():
    with pytest.raises(ValueError):
        make_batches(np.arange(3), 0, np.random.default_rng(0))
