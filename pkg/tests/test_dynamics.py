import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riskplan.constraints import Box
from riskplan.dynamics import (
    GaussianState,
    clean_covariance,
    covariance_sequence,
    in_goal,
    propagate_covariance,
    propagate_mean,
    rollout,
)
from riskplan.scenario import VehicleModel, double_integrator

from conftest import make_vehicle


def model(A, B, w_cov=None, n=None):
    n = A.shape[0]
    m = B.shape[1]
    return VehicleModel(
        0, A, B, -np.ones(m), np.ones(m), np.zeros(n), np.zeros((n, n)),
        np.zeros((n, n)) if w_cov is None else w_cov, Box(np.zeros(2), np.ones(2)),
    )


def test_identity_dynamics():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(propagate_mean(model(np.eye(4), np.zeros((4, 2))), x, np.zeros(2)), x)


def test_constant_velocity_drift():
    A, B = double_integrator(1.0)
    out = propagate_mean(model(A, B), np.array([0.0, 0, 1, 0]), np.zeros(2))
    np.testing.assert_array_equal(out, [1.0, 0, 1, 0])


def test_half_step_control():
    A, B = double_integrator(0.5)
    out = propagate_mean(model(A, B), np.zeros(4), np.array([1.0, 0.0]))
    np.testing.assert_allclose(out, [0.125, 0, 0.5, 0])


def test_dimension_mismatch():
    A, B = double_integrator(1.0)
    with pytest.raises(ValueError):
        propagate_mean(model(A, B), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        propagate_covariance(model(A, B), np.eye(3))


def test_out_of_bounds_control_warns(caplog):
    A, B = double_integrator(1.0)
    propagate_mean(model(A, B), np.zeros(4), np.array([2.0, 0.0]))
    assert "outside bounds" in caplog.text


def test_covariance_noiseless_identity():
    cov = np.diag([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(propagate_covariance(model(np.eye(4), np.zeros((4, 2))), cov), cov)


def test_covariance_noise_injection():
    m = model(np.eye(4), np.zeros((4, 2)), w_cov=0.3 * np.eye(4))
    np.testing.assert_allclose(propagate_covariance(m, np.zeros((4, 4))), 0.3 * np.eye(4))


def test_covariance_matches_sampled_transitions(rng):
    A, B = double_integrator(1.0)
    m = model(A, B, w_cov=0.001 * np.eye(4))
    cov0 = 0.01 * np.eye(4)
    x = rng.multivariate_normal(np.zeros(4), cov0, size=1_000_000)
    w = rng.multivariate_normal(np.zeros(4), m.w_cov, size=1_000_000)
    sample = np.cov((x @ A.T + w).T)
    np.testing.assert_allclose(propagate_covariance(m, cov0), sample, atol=5e-4)


@st.composite
def psd(draw, n=4):
    F = draw(arrays(float, (n, n), elements=st.floats(-3, 3)))
    return F @ F.T


@given(psd(), psd())
def test_covariance_stays_symmetric_psd(cov, w):
    A, B = double_integrator(1.0)
    out = propagate_covariance(model(A, B, w_cov=w), cov)
    assert np.array_equal(out, out.T)
    assert np.linalg.eigvalsh(out).min() >= -1e-9 * max(1.0, np.abs(out).max())


def test_clean_covariance_rejects_indefinite():
    with pytest.raises(ValueError):
        clean_covariance(np.diag([1.0, -1.0]))
    out = clean_covariance(np.diag([1.0, -1e-12]))
    assert out[1, 1] == 0.0


def test_rollout_empty():
    v = make_vehicle()
    states = rollout(v, [])
    assert len(states) == 1 and np.array_equal(states[0].mean, v.x0_mean)


def test_rollout_zero_controls_accumulates_noise():
    w = 0.01 * np.eye(4)
    m = model(np.eye(4), np.zeros((4, 2)), w_cov=w)
    states = rollout(m, [np.zeros(2)] * 3)
    for k, s in enumerate(states):
        np.testing.assert_array_equal(s.mean, m.x0_mean)
        np.testing.assert_allclose(s.cov, k * w)
        assert s.time == k


def test_rollout_composition(rng):
    v = make_vehicle()
    us = [rng.uniform(-1, 1, 2) for _ in range(6)]
    states = rollout(v, us)
    x, c = v.x0_mean, v.x0_cov
    for u in us:
        x, c = propagate_mean(v, x, u), propagate_covariance(v, c)
    np.testing.assert_array_equal(states[-1].mean, x)
    np.testing.assert_array_equal(states[-1].cov, c)


def test_covariance_independent_of_controls(rng):
    v = make_vehicle()
    a = rollout(v, [rng.uniform(-1, 1, 2) for _ in range(5)])
    b = rollout(v, [np.zeros(2)] * 5)
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.cov, t.cov)
    seq = covariance_sequence(v, v.x0_cov, 5)
    for s, c in zip(a, seq):
        np.testing.assert_array_equal(s.cov, c)


def test_noiseless_rollout_matches_simulation(rng):
    v = make_vehicle(x0_cov=np.zeros((4, 4)), w_cov=np.zeros((4, 4)))
    us = [rng.uniform(-1, 1, 2) for _ in range(8)]
    x = v.x0_mean.copy()
    for u, s in zip(us, rollout(v, us)[1:]):
        x = v.A @ x + v.B @ u
        np.testing.assert_array_equal(s.mean, x)


@pytest.mark.parametrize(
    "pos,expected",
    [((8.0, 8.0), True), ((8.25, 8.0), True), ((7.75, 7.75), True), ((8.251, 8.0), False), ((8.0, 7.749), False)],
)
def test_in_goal(pos, expected):
    v = make_vehicle(goal=(8.0, 8.0), half=0.25)
    st_ = GaussianState(np.array([pos[0], pos[1], 0.0, 0.0]), np.zeros((4, 4)))
    assert in_goal(st_, v) is expected
