import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vfcontrol import dynamics
from vfcontrol.dynamics import (
    Phantom3, Phantom3Params, Planar2, Planar2Params, PointMass1, PointMass1Params,
    make_model, model_constants,
)
from vfcontrol.errors import InvalidInputError, NumericalFailure

angles = arrays(float, 3, elements=st.floats(-np.pi, np.pi))
rates = arrays(float, 3, elements=st.floats(-20, 20, allow_subnormal=False))


# -- symbolic two-link oracle ------------------------------------------------


def _planar_symbolic():
    """H, C, G of the two-link arm from its kinetic and potential energy."""
    q1, q2, v1, v2 = sp.symbols("q1 q2 v1 v2", real=True)
    m1, m2, l1, l2, lc1, lc2, I1, I2, g = sp.symbols("m1 m2 l1 l2 lc1 lc2 I1 I2 g", positive=True)
    p1 = sp.Matrix([lc1 * sp.cos(q1), lc1 * sp.sin(q1)])
    p2 = sp.Matrix([l1 * sp.cos(q1) + lc2 * sp.cos(q1 + q2), l1 * sp.sin(q1) + lc2 * sp.sin(q1 + q2)])
    q = sp.Matrix([q1, q2])
    v = sp.Matrix([v1, v2])
    J1, J2 = p1.jacobian(q), p2.jacobian(q)
    kinetic = (m1 * (J1 * v).dot(J1 * v) + m2 * (J2 * v).dot(J2 * v)
               + I1 * v1**2 + I2 * (v1 + v2) ** 2) / 2
    H = sp.hessian(kinetic, (v1, v2)).applyfunc(sp.simplify)
    U = m1 * g * p1[1] + m2 * g * p2[1]
    G = sp.Matrix([sp.diff(U, qi) for qi in q])
    C = sp.zeros(2, 2)
    for i in range(2):
        for j in range(2):
            C[i, j] = sum(
                (sp.diff(H[i, j], q[k]) + sp.diff(H[i, k], q[j]) - sp.diff(H[j, k], q[i])) / 2 * v[k]
                for k in range(2))
    args = (q1, q2, v1, v2, m1, m2, l1, l2, lc1, lc2, I1, I2, g)
    return (sp.lambdify(args, H, "numpy"), sp.lambdify(args, C, "numpy"),
            sp.lambdify(args, G, "numpy"))


@pytest.fixture(scope="module")
def planar_oracle():
    return _planar_symbolic()


@pytest.mark.parametrize("params", [
    Planar2Params(),
    Planar2Params(m_1=2.0, m_2=0.7, l_1=0.9, l_2=0.6, lc_1=0.3, lc_2=0.45, I_1=0.05, I_2=0.02, g=9.0),
])
def test_planar2_matches_symbolic_lagrangian(planar_oracle, params, rng):
    H_s, C_s, G_s = planar_oracle
    model = Planar2(params)
    p = (params.m_1, params.m_2, params.l_1, params.l_2, params.lc_1, params.lc_2,
         params.I_1, params.I_2, params.g)
    for _ in range(50):
        q = rng.uniform(-np.pi, np.pi, 2)
        v = rng.normal(size=2) * 3
        np.testing.assert_allclose(dynamics.inertia(model, q), H_s(*q, *v, *p), atol=1e-10, rtol=0)
        np.testing.assert_allclose(dynamics.coriolis(model, q, v), C_s(*q, *v, *p), atol=1e-10, rtol=0)
        np.testing.assert_allclose(dynamics.gravity(model, q), np.ravel(G_s(*q, *v, *p)),
                                   atol=1e-10, rtol=0)


def test_planar2_straight_arm_inertia(planar):
    p = planar.params
    expected = (p.m_1 * p.lc_1**2 + p.I_1 + p.m_2 * (p.l_1 + p.lc_2) ** 2 + p.I_2)
    assert dynamics.inertia(planar, [0.3, 0.0])[0, 0] == pytest.approx(expected, abs=1e-12)


def test_planar2_hanging_has_no_gravity_torque(planar):
    np.testing.assert_allclose(dynamics.gravity(planar, [-np.pi / 2, 0.0]), 0.0, atol=1e-14)


# -- the three-joint arm -----------------------------------------------------


def test_phantom_sparsity(phantom, rng):
    for q in rng.uniform(-np.pi, np.pi, (20, 3)):
        H = dynamics.inertia(phantom, q)
        assert H[0, 1] == H[0, 2] == H[1, 0] == H[2, 0] == 0.0
        C = dynamics.coriolis(phantom, q, rng.normal(size=3))
        assert C[1, 1] == 0.0 and C[2, 2] == 0.0
        assert dynamics.gravity(phantom, q)[0] == 0.0


def test_phantom_inertia_closed_form(phantom, rng):
    p = phantom.params
    a1 = 4 * p.I_beyy - 4 * p.I_bezz + 4 * p.I_cyy - 4 * p.I_czz + 4 * p.l_1**2 * p.m_a + p.l_1**2 * p.m_c
    a2 = -4 * p.I_ayy + 4 * p.I_azz - 4 * p.I_dfyy + 4 * p.I_dfzz + p.l_2**2 * p.m_a + 4 * p.l_3**2 * p.m_c
    a3 = p.l_1 * (p.l_2 * p.m_a + p.l_3 * p.m_c)
    assert phantom.alphas() == pytest.approx((a1, a2, a3), rel=1e-14)
    q = rng.uniform(-np.pi, np.pi, 3)
    H = dynamics.inertia(phantom, q)
    H0 = dynamics.inertia(phantom, [0.0, 0.0, 0.0])[0, 0]
    # H11 varies with q2, q3 only through the three alpha groups
    dH11 = (a1 * (np.cos(2 * q[1]) - 1) - a2 * (np.cos(2 * q[2]) - 1)
            + 8 * a3 * np.cos(q[1]) * np.sin(q[2])) / 8
    assert H[0, 0] - H0 == pytest.approx(dH11, abs=1e-15)
    assert H[1, 2] == pytest.approx(-0.5 * a3 * np.sin(q[1] - q[2]), abs=1e-16)


def test_phantom_coriolis_entry_bounds(phantom, rng):
    a1, a2, a3 = (abs(a) for a in phantom.alphas())
    for _ in range(200):
        q = rng.uniform(-np.pi, np.pi, 3)
        v = rng.normal(size=3) * 5
        C = np.abs(dynamics.coriolis(phantom, q, v))
        w = np.abs(v)
        tol = 1e-15
        assert C[0, 0] <= (w[1] * (2 * a1 + 4 * a3) + w[2] * (2 * a2 + 4 * a3)) / 8 + tol
        assert C[0, 1] <= w[0] * (a1 + 4 * a3) / 8 + tol
        assert C[0, 2] <= w[0] * (a2 + 4 * a3) / 8 + tol
        assert C[1, 0] <= w[0] * (a1 + 4 * a3) / 8 + tol
        assert C[1, 2] <= w[2] * a3 / 2 + tol
        assert C[2, 0] <= w[0] * (a2 + 4 * a3) / 8 + tol
        assert C[2, 1] <= w[1] * a3 / 2 + tol


def test_phantom_constants_near_published(phantom):
    c = model_constants(phantom)
    assert c.lambda_max_H == pytest.approx(0.0052, abs=1e-4)
    assert c.lambda_min_H == pytest.approx(0.0003, abs=5e-5)
    assert c.k_c == pytest.approx(0.0095, abs=1e-4)
    assert c.k_c == pytest.approx(phantom.coriolis_bound())


def test_pointmass_constants(pointmass):
    p = pointmass.params
    c = model_constants(PointMass1(PointMass1Params(m=2.0, l=0.5)))
    assert c.lambda_min_H == c.lambda_max_H == pytest.approx(2.0 * 0.25)
    assert c.k_c == 0.0
    c1 = model_constants(pointmass)
    assert c1.k_g == pytest.approx(1.1 * p.m * p.g * p.l, rel=1e-6)


def test_sampled_constants_bound_fresh_samples(planar, rng):
    c = model_constants(planar, samples=2000, seed=3)
    Q = rng.uniform(-np.pi, np.pi, (10_000, 2))
    X = rng.normal(size=(10_000, 2))
    C = dynamics.coriolis(planar, Q, X)
    ratio = np.linalg.norm(np.einsum("sij,sj->si", C, X), axis=1) / np.einsum("si,si->s", X, X)
    assert ratio.max() <= c.k_c


def test_model_constants_rejects_empty_grid(planar):
    with pytest.raises(InvalidInputError):
        model_constants(planar, samples=0)


# -- generic identities ------------------------------------------------------


@given(q=angles, v=rates, x=rates)
def test_skew_symmetry_with_finite_difference_hdot(q, v, x):
    model = Phantom3()
    h = 1e-5
    H_dot = (dynamics.inertia(model, q + h * v) - dynamics.inertia(model, q - h * v)) / (2 * h)
    N = H_dot - 2 * dynamics.coriolis(model, q, v)
    assert abs(x @ N @ x) <= 1e-6 * (x @ x) * np.linalg.norm(v) + 1e-12 * (x @ x)


@given(q=angles, x=rates, y=rates)
def test_coriolis_exchange(q, x, y):
    model = Phantom3()
    lhs = dynamics.coriolis(model, q, x) @ y
    rhs = dynamics.coriolis(model, q, y) @ x
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * (1 + np.linalg.norm(x) * np.linalg.norm(y))


@given(q=arrays(float, 2, elements=st.floats(-np.pi, np.pi)))
def test_gravity_is_potential_gradient(q):
    model = Planar2()
    h = 1e-6
    fd = [(dynamics.potential(model, q + h * e) - dynamics.potential(model, q - h * e)) / (2 * h)
          for e in np.eye(2)]
    np.testing.assert_allclose(dynamics.gravity(model, q), fd, atol=1e-6)


def test_inertia_gradient_matches_finite_differences(phantom, rng):
    q = rng.uniform(-np.pi, np.pi, 3)
    h = 1e-6
    dH = dynamics.inertia_gradient(phantom, q)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (dynamics.inertia(phantom, q + e) - dynamics.inertia(phantom, q - e)) / (2 * h)
        np.testing.assert_allclose(dH[k], fd, atol=1e-10)


def test_zero_velocity_gives_zero_coriolis(phantom, planar):
    assert not dynamics.coriolis(phantom, [0.3, -1.0, 2.0], np.zeros(3)).any()
    assert not dynamics.coriolis(planar, [0.3, -1.0], np.zeros(2)).any()


def test_batched_and_single_agree(phantom, rng):
    Q = rng.uniform(-np.pi, np.pi, (7, 3))
    V = rng.normal(size=(7, 3))
    Hb = dynamics.inertia(phantom, Q)
    Cb = dynamics.coriolis(phantom, Q, V)
    for k in range(7):
        np.testing.assert_array_equal(Hb[k], dynamics.inertia(phantom, Q[k]))
        np.testing.assert_allclose(Cb[k], dynamics.coriolis(phantom, Q[k], V[k]), atol=1e-18)


# -- forward dynamics --------------------------------------------------------


@pytest.mark.parametrize("model", [Phantom3(), Planar2(), PointMass1()], ids=lambda m: m.name)
def test_forward_dynamics_cancellation(model, rng):
    n = model.n
    q = rng.uniform(-2, 2, n)
    v = rng.normal(size=n)
    tau = dynamics.coriolis(model, q, v) @ v + dynamics.gravity(model, q)
    np.testing.assert_allclose(dynamics.forward_dynamics(model, q, v, tau), 0.0, atol=1e-9)
    acc = dynamics.forward_dynamics(model, q, np.zeros(n), dynamics.gravity(model, q))
    np.testing.assert_allclose(acc, 0.0, atol=1e-9)


@pytest.mark.parametrize("model", [Phantom3(), Planar2()], ids=lambda m: m.name)
def test_forward_dynamics_residual(model, rng):
    n = model.n
    for _ in range(20):
        q, v, tau = rng.uniform(-3, 3, n), rng.normal(size=n), rng.normal(size=n)
        acc = dynamics.forward_dynamics(model, q, v, tau)
        res = dynamics.inertia(model, q) @ acc - (
            tau - dynamics.coriolis(model, q, v) @ v - dynamics.gravity(model, q))
        assert np.linalg.norm(res) < 1e-10


def test_forward_dynamics_rejects_nan(phantom):
    with pytest.raises((NumericalFailure, InvalidInputError)):
        dynamics.forward_dynamics(phantom, [np.nan, 0, 0], np.zeros(3), np.zeros(3))


def test_spd_solve_flags_indefinite():
    x = np.empty(2)
    assert not dynamics.spd_solve(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2), x)
    assert dynamics.spd_solve(np.array([[4.0, 1.0], [1.0, 3.0]]), np.array([1.0, 2.0]), x)
    np.testing.assert_allclose(x, np.linalg.solve([[4.0, 1.0], [1.0, 3.0]], [1.0, 2.0]))


# -- construction and validation ---------------------------------------------


def test_dimension_mismatch_rejected(phantom):
    with pytest.raises(InvalidInputError):
        dynamics.inertia(phantom, [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        dynamics.coriolis(phantom, np.zeros(3), np.zeros(2))


def test_nonfinite_joint_vector_rejected(planar):
    with pytest.raises(InvalidInputError):
        dynamics.gravity(planar, [np.inf, 0.0])


@pytest.mark.parametrize("bad", [{"m_a": 0.0}, {"l_2": -1.0}, {"I_ayy": -1e-6}])
def test_phantom_params_validation(bad):
    with pytest.raises(InvalidInputError):
        Phantom3Params(**bad)


def test_planar_params_validation():
    with pytest.raises(InvalidInputError):
        Planar2Params(lc_1=2.0)


def test_make_model_and_perturbation():
    m = make_model("phantom3", {"m_a": 0.03})
    assert m.params.m_a == 0.03
    heavier = m.perturbed("m_a", 1.0)
    assert heavier.params.m_a == pytest.approx(1.03)
    assert m.params.m_a == 0.03
    with pytest.raises(InvalidInputError):
        make_model("scara")
    with pytest.raises(InvalidInputError):
        make_model("planar2", {"mass": 1.0})
    with pytest.raises(InvalidInputError):
        m.perturbed("nope", 1.0)
