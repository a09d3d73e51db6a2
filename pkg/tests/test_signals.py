import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vfcontrol import dynamics
from vfcontrol.errors import InvalidInputError
from vfcontrol.signals import (
    DirtyDiffState, LinearObserverState, NicosiaObserverState,
    dirty_diff_derivatives, linear_observer_derivatives, nicosia_observer_derivatives,
)
from vfcontrol.simulation import rk4_step
from vfcontrol.validation import filter_response_property


def _run_filter(u, b, l, T, dt):
    state = DirtyDiffState.settled(u(0.0), b, l)
    z = state.z

    def rhs(t, z):
        return dirty_diff_derivatives(DirtyDiffState(z, b, l), u(t))[0]

    steps = int(round(T / dt))
    for k in range(steps):
        z = rk4_step(rhs, z, k * dt, dt)
    return DirtyDiffState(z, b, l).output(u(T))


def test_settled_filter_outputs_zero():
    s = DirtyDiffState.settled([0.3, -1.2], [5.0, 2.0], [100.0, 10.0])
    np.testing.assert_allclose(s.output([0.3, -1.2]), 0.0, atol=1e-15)
    z_dot, theta = dirty_diff_derivatives(s, [0.3, -1.2])
    np.testing.assert_allclose(z_dot, 0.0, atol=1e-15)
    np.testing.assert_allclose(theta, 0.0, atol=1e-15)


def test_ramp_response_closed_form():
    # u = a t from rest: theta(t) = (b a / l)(1 - exp(-l t))
    a, b, l = 2.0, 5.0, 20.0
    for T in (0.01, 0.1, 1.0):
        theta = _run_filter(lambda t: np.array([a * t]), np.array([b]), np.array([l]), T, 1e-4)
        assert theta[0] == pytest.approx(b * a / l * (1 - np.exp(-l * T)), rel=1e-9)


def test_sinusoid_steady_state_amplitude():
    b, l, w = 5.0, 100.0, 30.0
    # steady state of b s/(s+l) on sin(w t) is A sin(w t + phi)
    amp = b * w / np.hypot(l, w)
    phi = np.arctan2(l, w)
    T = 1.0
    theta = _run_filter(lambda t: np.array([np.sin(w * t)]), np.array([b]), np.array([l]), T, 1e-4)
    assert theta[0] == pytest.approx(amp * np.sin(w * T + phi), abs=1e-8)


def test_frequency_response_sweep():
    res = filter_response_property(b=5.0, l=100.0, dt=1e-3)
    assert res.passed, res


@given(z=arrays(float, 3, elements=st.floats(-10, 10)),
       u=arrays(float, 3, elements=st.floats(-10, 10)),
       c=st.floats(-5, 5))
def test_filter_is_linear(z, u, c):
    b, l = np.array([1.0, 5.0, 9.0]), np.array([2.0, 50.0, 300.0])
    zd1, th1 = dirty_diff_derivatives(DirtyDiffState(z, b, l), u)
    zd2, th2 = dirty_diff_derivatives(DirtyDiffState(c * z, b, l), c * u)
    np.testing.assert_allclose(zd2, c * zd1, atol=1e-9)
    np.testing.assert_allclose(th2, c * th1, atol=1e-9)


def test_filter_rejects_nonpositive_gains():
    with pytest.raises(InvalidInputError):
        DirtyDiffState(np.zeros(2), [1.0, 0.0], [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        DirtyDiffState(np.zeros(2), [1.0, 1.0], [1.0, -3.0])


def test_linear_observer_step_response():
    # x = e - e_hat obeys x'' + L_D x' + L_P x = 0; L_D = 3, L_P = 2 gives roots -1, -2
    e = np.array([1.0])
    L_D, L_P = np.array([[3.0]]), np.array([[2.0]])
    x = np.array([0.0, 0.0])
    dt = 1e-3

    def rhs(t, x):
        s = LinearObserverState(x[:1], x[1:], L_D, L_P)
        return np.concatenate(linear_observer_derivatives(s, e))

    for k in range(2000):
        x = rk4_step(rhs, x, k * dt, dt)
    t = 2.0
    err = e[0] - x[0]
    assert err == pytest.approx(-np.exp(-t) + 2 * np.exp(-2 * t), abs=1e-11)


def test_linear_observer_derivative_estimate():
    s = LinearObserverState([0.1, 0.2], [1.0, -1.0], np.diag([3.0, 4.0]), np.eye(2))
    np.testing.assert_allclose(s.derivative_estimate([0.2, 0.0]), [1.0 + 0.3, -1.0 - 0.8])


def test_nicosia_observer_is_exact_on_the_true_state(phantom, rng):
    q = rng.uniform(-2, 2, 3)
    v = rng.normal(size=3)
    tau = rng.normal(size=3) * 0.01
    state = NicosiaObserverState(q, v, 50.0, 3.0 * np.eye(3))
    q_hat_dot, v_hat_dot = nicosia_observer_derivatives(state, q, tau, phantom)
    np.testing.assert_allclose(q_hat_dot, v, atol=1e-14)
    np.testing.assert_allclose(v_hat_dot, dynamics.forward_dynamics(phantom, q, v, tau), rtol=1e-10)


def test_nicosia_observer_correction_terms(planar, rng):
    q = rng.uniform(-2, 2, 2)
    q_hat = q + rng.normal(size=2) * 0.1
    v_hat = rng.normal(size=2)
    tau = rng.normal(size=2)
    k_D, L = 7.0, np.diag([2.0, 5.0])
    state = NicosiaObserverState(q_hat, v_hat, k_D, L)
    q_hat_dot, v_hat_dot = nicosia_observer_derivatives(state, q, tau, planar)
    qhd = v_hat + k_D * (q - q_hat)
    np.testing.assert_allclose(q_hat_dot, qhd)
    np.testing.assert_allclose(state.velocity_estimate(q), qhd)
    rhs = (tau - dynamics.coriolis(planar, q, qhd) @ qhd - dynamics.gravity(planar, q)
           + L @ (q - q_hat))
    np.testing.assert_allclose(v_hat_dot, np.linalg.solve(dynamics.inertia(planar, q), rhs),
                               rtol=1e-10)


def test_observer_state_validation():
    with pytest.raises(InvalidInputError):
        NicosiaObserverState(np.zeros(2), np.zeros(2), 0.0, np.eye(2))
    with pytest.raises(InvalidInputError):
        NicosiaObserverState(np.zeros(2), np.zeros(2), 1.0, -np.eye(2))
    with pytest.raises(InvalidInputError):
        LinearObserverState(np.zeros(2), np.zeros(3), np.eye(2), np.eye(2))
    with pytest.raises(InvalidInputError):
        LinearObserverState(np.zeros(2), np.zeros(2), np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
