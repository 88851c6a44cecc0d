import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from singulax import model, observer
from singulax.errors import DimensionMismatch, InfeasibleData, ZeroDirection


@pytest.fixture(scope="module")
def builtin_run():
    sys = model.paper_example_system()
    N = 100
    gens = model.harmonic_generators(sys, N, model.PAPER_X0, free_amplitude=1.0)
    traj = model.simulate(sys, N, model.PAPER_X0, gens.f_gen, gens.g_gen, gens.free_gen)
    return sys, traj, list(observer.iterate(sys, traj.y))


def scalar_states(ys):
    return list(observer.iterate(model.scalar_system(), [[v] for v in ys]))


# hand-derived values on the scalar system F = C = H = S = S_k = R_k = 1

def test_init_scalar_zero_measurement():
    s = scalar_states([0.0])[0]
    assert s.Q[0, 0] == 2.0 and s.r[0] == 0.0 and s.alpha == 0.0


def test_init_scalar_unit_measurement():
    s = scalar_states([1.0])[0]
    assert s.r[0] == 1.0 and s.alpha == 1.0
    assert observer.estimate(s)[0] == pytest.approx(0.5)
    assert observer.global_error(s) == pytest.approx(0.25)


def test_step_scalar_zero_data():
    s = scalar_states([0.0, 0.0])[1]
    assert s.Q[0, 0] == pytest.approx(5 / 3, abs=1e-15)
    assert s.r[0] == 0.0 and s.alpha == 0.0


def test_step_scalar_unit_then_zero():
    s = scalar_states([1.0, 0.0])[1]
    assert s.r[0] == pytest.approx(1 / 3, abs=1e-15)
    assert s.alpha == pytest.approx(2 / 3, abs=1e-15)


def test_directional_and_global_error_scalar():
    s = scalar_states([0.0])[0]
    de = observer.directional_error(s, [1.0])
    assert de.finite
    assert de.sigma == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert observer.global_error(s) == pytest.approx(0.5)
    assert observer.causality_index(s) == 1


def test_kernel_direction_is_infinite():
    sys = model.make_system(np.array([[1.0, 0.0]]), np.zeros((1, 2)), np.zeros((1, 2)))
    s = observer.init(sys, [0.0])
    assert np.allclose(s.Q, np.diag([1.0, 0.0]))
    de = observer.directional_error(s, [0.0, 1.0])
    assert not de.finite and math.isinf(de.sigma)
    assert math.isinf(observer.global_error(s))


def test_zero_direction_rejected():
    with pytest.raises(ZeroDirection):
        observer.directional_error(scalar_states([0.0])[0], [0.0])


def test_wrong_measurement_dimension():
    with pytest.raises(DimensionMismatch):
        observer.init(model.scalar_system(), [1.0, 2.0])


def test_blind_sensor_keeps_r_zero():
    sys = model.make_system(np.eye(2), 0.5 * np.eye(2), np.zeros((1, 2)), R_seq=[[7.0]])
    for s in observer.iterate(sys, [[3.0], [-1.0], [2.0]]):
        assert np.all(s.r == 0)


def test_infeasible_data_raises():
    s = scalar_states([10.0])[0]
    with pytest.raises(InfeasibleData):
        observer.checked_beta(s)


def test_ellipsoid_scalar_membership():
    ell = observer.aposteriori_ellipsoid(scalar_states([0.0])[0])
    assert ell.contains([1 / math.sqrt(2) - 1e-9])
    assert not ell.contains([1 / math.sqrt(2) + 1e-6])
    assert ell.contains(ell.center)


def test_ellipsoid_kernel_invariance():
    sys = model.make_system(np.array([[1.0, 0.0]]), np.zeros((1, 2)), np.zeros((1, 2)))
    ell = observer.aposteriori_ellipsoid(observer.init(sys, [0.0]))
    assert ell.contains([0.5, 0.0]) == ell.contains([0.5, 1e6])


def test_run_single_measurement_matches_init():
    (rep,) = observer.run(model.scalar_system(), [[1.0]], [[1.0]])
    assert rep.k == 0 and rep.causality_index == 1
    assert rep.estimate[0] == pytest.approx(0.5)


def test_run_needs_data():
    with pytest.raises(ValueError):
        observer.run(model.scalar_system(), [])


# the builtin example as printed: the third state is observed at odd steps

def test_builtin_example_index_parity_as_computed(builtin_run):
    _, _, states = builtin_run
    ranks = [observer.causality_index(s) for s in states]
    assert all(r == 3 for r in ranks[1::2])
    assert all(r in (1, 2) for r in ranks[0::2])


def test_builtin_example_third_coordinate_vanishes_at_even_steps(builtin_run):
    _, traj, states = builtin_run
    for s in states[0::2]:
        assert observer.estimate(s)[2] == 0.0
        assert observer.sigma_expression(s, [0.0, 0.0, 1.0]) == 0.0
        assert not observer.directional_error(s, [0.0, 0.0, 1.0]).finite
    assert any(abs(traj.x[k, 2]) > 0 for k in range(2, 101, 2))


def test_builtin_example_run_is_fast(builtin_run):
    import time
    sys, traj, _ = builtin_run
    t = time.perf_counter()
    observer.run(sys, traj.y, np.eye(3))
    assert time.perf_counter() - t < 1.0


def test_builtin_example_beta_stays_feasible(builtin_run):
    _, _, states = builtin_run
    assert all(observer.checked_beta(s) >= 0 for s in states)


# properties over random systems

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.data())
def test_online_sufficiency(seed, data):
    inst = random_instance(np.random.default_rng(seed), N_max=10, screen=False)
    split = data.draw(st.integers(0, inst.N))
    head = list(observer.iterate(inst.sys, inst.y[:split + 1]))
    tail = list(observer.iterate(inst.sys, inst.y[split + 1:], state=head[-1]))
    joined = head + tail
    for a, b in zip(joined, inst.states):
        assert np.array_equal(a.Q, b.Q) and np.array_equal(a.r, b.r) and a.alpha == b.alpha


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_q_stays_psd(seed):
    inst = random_instance(np.random.default_rng(seed), screen=False)
    for s in inst.states:
        w = np.linalg.eigvalsh(s.Q)
        assert w[0] >= -1e-8 * max(w[-1], 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_beta_nonnegative_on_feasible_data(seed):
    inst = random_instance(np.random.default_rng(seed), screen=False)
    for s in inst.states:
        assert s.beta >= -1e-8 * max(1.0, abs(s.alpha))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_true_state_lies_in_ellipsoid(seed):
    inst = random_instance(np.random.default_rng(seed), screen=False)
    for k, s in enumerate(inst.states):
        assert observer.aposteriori_ellipsoid(s).contains(inst.x[k], tol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.data())
def test_information_monotone_in_measurement_weight(seed, data):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, N_max=6, screen=False)
    sys = inst.sys
    j = data.draw(st.integers(0, inst.N))
    B = rng.normal(size=(sys.p, sys.p))
    bumped = lambda k: sys.R_seq(k) + (B @ B.T if k == j else 0.0)
    sys2 = model.make_system(sys.F, sys.C, sys.H, S=sys.S, S_seq=sys.S_seq, R_seq=bumped)
    a = list(observer.iterate(sys, inst.y))[j]
    b = list(observer.iterate(sys2, inst.y))[j]
    w = np.linalg.eigvalsh(b.Q - a.Q)
    assert w[0] >= -1e-8 * max(1.0, np.max(np.abs(a.Q)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_finite_iff_in_range(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    s = inst.states[-1]
    for l in list(np.eye(inst.sys.n)) + [rng.normal(size=inst.sys.n)]:
        de = observer.directional_error(s, l)
        assert de.finite == (np.linalg.norm(s.q_pinv.project(l) - l)
                             <= observer.RANGE_TOL * np.linalg.norm(l))
        assert de.estimate_component == pytest.approx(float(l @ observer.estimate(s)))
