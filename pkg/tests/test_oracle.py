import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from singulax import model, observer, oracle
from singulax.errors import DimensionMismatch, InfeasibleData


def test_single_block():
    sys = model.paper_example_system()
    bs = oracle.build_block_system(sys, 0)
    assert np.array_equal(bs.FF, sys.F(0))
    assert np.array_equal(bs.HH, sys.H(0))


def test_scalar_two_step_pattern():
    bs = oracle.build_block_system(model.scalar_system(), 1)
    assert np.array_equal(bs.FF, [[1.0, 0.0], [-1.0, 1.0]])


def test_builtin_block_shape_and_pattern():
    sys = model.paper_example_system()
    bs = oracle.build_block_system(sys, 2)
    assert bs.FF.shape == (6, 9)
    assert np.array_equal(bs.FF[2:4, 0:3], -sys.C(0))
    assert np.array_equal(bs.FF[4:6, 3:6], -sys.C(1))
    assert np.all(bs.FF[4:6, 0:3] == 0) and np.all(bs.FF[0:2, 3:9] == 0)
    assert bs.HH.shape == (12, 9)
    assert np.all(bs.HH[0:4, 3:9] == 0)


def test_stacked_residuals_match_per_step():
    rng = np.random.default_rng(3)
    sys = model.random_system(rng, 3, 2, 2, 4)
    x = rng.normal(size=(5, 3))
    res = oracle.build_block_system(sys, 4).FF @ x.ravel()
    assert np.allclose(res[:2], sys.F(0) @ x[0])
    for k in range(4):
        assert np.allclose(res[2 * (k + 1):2 * (k + 2)], sys.F(k + 1) @ x[k + 1] - sys.C(k) @ x[k])


def test_batch_scalar_single_measurement():
    res = oracle.batch_estimate(model.scalar_system(), [[1.0]])
    assert res.xhat[0, 0] == pytest.approx(0.5)
    assert res.cost == pytest.approx(0.5)


def test_batch_zero_data():
    res = oracle.batch_estimate(model.paper_example_system(), np.zeros((4, 4)))
    assert np.all(np.abs(res.xhat) < 1e-14) and res.cost == pytest.approx(0.0, abs=1e-20)


def test_batch_wrong_shape():
    with pytest.raises(DimensionMismatch):
        oracle.batch_estimate(model.scalar_system(), np.zeros((3, 2)), N=2)


def test_smoother_scalar_hand_values():
    res = oracle.smooth_backward(model.scalar_system(), [[1.0], [0.0]])
    assert res.xhat[1, 0] == pytest.approx(0.2, abs=1e-15)
    assert res.xhat[0, 0] == pytest.approx(0.4, abs=1e-15)


def test_smoother_single_step_matches_batch():
    sys = model.scalar_system()
    a = oracle.smooth_backward(sys, [[0.7]])
    b = oracle.batch_estimate(sys, [[0.7]])
    assert np.allclose(a.xhat, b.xhat) and a.cost == pytest.approx(b.cost)


def test_membership_regular_system():
    rng = np.random.default_rng(5)
    sys = model.random_system(rng, 3, 2, 2, 3, regular=True)
    for l in np.eye(3):
        assert oracle.range_membership(sys, 3, l)[0]


def test_membership_unobservable_direction():
    sys = model.make_system(np.array([[1.0, 0.0]]), np.zeros((1, 2)), np.zeros((1, 2)))
    member, norm_sq = oracle.range_membership(sys, 0, [0.0, 1.0])
    assert not member and math.isinf(norm_sq)


def test_support_scalar():
    assert oracle.support_function(model.scalar_system(), [[0.0]], 0, [1.0]) == \
        pytest.approx(1 / math.sqrt(2))


def test_support_kernel_direction():
    sys = model.make_system(np.array([[1.0, 0.0]]), np.zeros((1, 2)), np.zeros((1, 2)))
    assert math.isinf(oracle.support_function(sys, [[0.0]], 0, [0.0, 1.0]))


def test_support_infeasible():
    with pytest.raises(InfeasibleData):
        oracle.support(model.scalar_system(), [[10.0]], [1.0])


def test_support_point_is_on_the_boundary():
    rng = np.random.default_rng(8)
    inst = random_instance(rng, N_max=5)
    bs = oracle.build_block_system(inst.sys, inst.N)
    l = np.ones(inst.sys.n)
    res = oracle.support(inst.sys, inst.y, l)
    if res.point is not None:
        assert bs.cost(res.point, inst.y) == pytest.approx(1.0, abs=1e-8)
        assert float(res.point[-1] @ l) == pytest.approx(res.value, rel=1e-9, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_batch_cost_is_minimal(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, N_max=8)
    bs = oracle.build_block_system(inst.sys, inst.N)
    res = oracle.batch_estimate(inst.sys, inst.y)
    for _ in range(5):
        X = res.xhat + 1e-3 * rng.normal(size=res.xhat.shape)
        assert bs.cost(X, inst.y) >= res.cost - 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_three_estimates_agree(seed):
    inst = random_instance(np.random.default_rng(seed))
    st_ = inst.states[-1]
    b = oracle.batch_estimate(inst.sys, inst.y)
    s = oracle.smooth_backward(inst.sys, inst.y)
    scale = 1.0 + np.max(np.abs(b.xhat[-1]))
    xo = observer.estimate(st_)
    assert np.max(np.abs(xo - st_.q_pinv.project(b.xhat[-1]))) <= 1e-8 * scale
    assert np.max(np.abs(xo - st_.q_pinv.project(s.xhat[-1]))) <= 1e-8 * scale
    assert s.cost == pytest.approx(b.cost, rel=1e-8, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_smoother_range_components_match_batch(seed):
    inst = random_instance(np.random.default_rng(seed))
    A = oracle.build_block_system(inst.sys, inst.N).weighted_design()
    b = oracle.batch_estimate(inst.sys, inst.y)
    s = oracle.smooth_backward(inst.sys, inst.y)
    d = np.linalg.norm(A @ (s.xhat.ravel() - b.xhat.ravel()))
    assert d <= 1e-8 * (1.0 + np.linalg.norm(A @ b.xhat.ravel()))
