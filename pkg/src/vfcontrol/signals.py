"""Velocity-free signal generators: dirty-derivative filter and two observers.

Each block is a pure map (state, input) -> state derivative.  The jitted
kernels (``*_k``) are what the simulation engine calls; the wrappers below
them take the state records used by the rest of the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from . import dynamics
from .dynamics import RobotModel
from .errors import InvalidInputError, NumericalFailure


@nb.njit(cache=True)
def dirty_diff_k(z, u, b, l, z_dot, theta):
    """z' = -l z + u and theta = b (u - l z), i.e. theta = b s/(s + l) u."""
    for i in range(z.shape[0]):
        z_dot[i] = -l[i] * z[i] + u[i]
        theta[i] = b[i] * (u[i] - l[i] * z[i])


@nb.njit(cache=True)
def nicosia_observer_k(q_hat, v_hat, q, tau, k_obs, L, H, dH, G, q_hat_dot, v_hat_dot):
    """Model-based observer; returns False when H(q) is not SPD.

    ``q_hat_dot`` is formed first and then reused inside C(q, q_hat_dot).
    """
    n = q.shape[0]
    for i in range(n):
        q_hat_dot[i] = v_hat[i] + k_obs * (q[i] - q_hat[i])
    C = np.empty((n, n))
    dynamics.christoffel_coriolis(dH, q_hat_dot, C)
    rhs = np.empty(n)
    for i in range(n):
        acc = tau[i] - G[i]
        for j in range(n):
            acc += -C[i, j] * q_hat_dot[j] + L[i, j] * (q[j] - q_hat[j])
        rhs[i] = acc
    return dynamics.spd_solve(H, rhs, v_hat_dot)


@nb.njit(cache=True)
def linear_observer_k(e_hat, w, e, L_D, L_P, e_hat_dot, w_dot):
    n = e.shape[0]
    for i in range(n):
        a = 0.0
        c = 0.0
        for j in range(n):
            a += L_D[i, j] * (e[j] - e_hat[j])
            c += L_P[i, j] * (e[j] - e_hat[j])
        e_hat_dot[i] = w[i] + a
        w_dot[i] = c


def _vec(x, n=None, name="vector"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or (n is not None and arr.shape[0] != n):
        raise InvalidInputError(f"{name} must be a length-{n} vector; got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def _mat(x, n, name="matrix"):
    arr = np.asarray(x, dtype=float)
    if arr.shape != (n, n):
        raise InvalidInputError(f"{name} must be {n}x{n}; got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def is_spd(A) -> bool:
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        return False
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class DirtyDiffState:
    z: np.ndarray
    b: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        n = len(np.atleast_1d(self.z))
        object.__setattr__(self, "z", _vec(self.z, n, "z"))
        object.__setattr__(self, "b", _vec(self.b, n, "b"))
        object.__setattr__(self, "l", _vec(self.l, n, "l"))
        if np.any(self.b <= 0) or np.any(self.l <= 0):
            raise InvalidInputError("filter gains b_i and poles l_i must be positive")

    @classmethod
    def settled(cls, u0, b, l) -> "DirtyDiffState":
        """Filter at rest on a constant input ``u0`` (zero output)."""
        return cls(np.asarray(u0, float) / np.asarray(l, float), b, l)

    def output(self, u) -> np.ndarray:
        return self.b * (_vec(u, len(self.z), "u") - self.l * self.z)


def dirty_diff_derivatives(state: DirtyDiffState, u) -> tuple[np.ndarray, np.ndarray]:
    """(z_dot, theta) for the filtered derivative of a position-like input ``u``."""
    u = _vec(u, len(state.z), "u")
    z_dot = np.empty_like(u)
    theta = np.empty_like(u)
    dirty_diff_k(state.z, u, state.b, state.l, z_dot, theta)
    return z_dot, theta


@dataclass(frozen=True)
class NicosiaObserverState:
    q_hat: np.ndarray
    v_hat: np.ndarray
    k_D: float
    L: np.ndarray

    def __post_init__(self):
        n = len(np.atleast_1d(self.q_hat))
        object.__setattr__(self, "q_hat", _vec(self.q_hat, n, "q_hat"))
        object.__setattr__(self, "v_hat", _vec(self.v_hat, n, "v_hat"))
        object.__setattr__(self, "L", _mat(self.L, n, "L"))
        if not self.k_D > 0:
            raise InvalidInputError("observer gain k_D must be positive")
        if not is_spd(self.L):
            raise InvalidInputError("observer matrix L must be symmetric positive definite")

    def velocity_estimate(self, q) -> np.ndarray:
        """The observer's q_hat_dot = v_hat + k_D (q - q_hat)."""
        return self.v_hat + self.k_D * (np.asarray(q, float) - self.q_hat)


def nicosia_observer_derivatives(state: NicosiaObserverState, q, tau,
                                 model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    n = model.n
    if len(state.q_hat) != n:
        raise InvalidInputError("observer dimension does not match the model")
    q = _vec(q, n, "q")
    tau = _vec(tau, n, "tau")
    H = dynamics.inertia(model, q)
    dH = dynamics.inertia_gradient(model, q)
    G = dynamics.gravity(model, q)
    q_hat_dot = np.empty(n)
    v_hat_dot = np.empty(n)
    ok = nicosia_observer_k(state.q_hat, state.v_hat, q, tau, float(state.k_D), state.L,
                            H, dH, G, q_hat_dot, v_hat_dot)
    if not ok:
        raise NumericalFailure("inertia matrix is not positive definite in the observer")
    return q_hat_dot, v_hat_dot


@dataclass(frozen=True)
class LinearObserverState:
    e_hat: np.ndarray
    w: np.ndarray
    L_D: np.ndarray
    L_P: np.ndarray

    def __post_init__(self):
        n = len(np.atleast_1d(self.e_hat))
        object.__setattr__(self, "e_hat", _vec(self.e_hat, n, "e_hat"))
        object.__setattr__(self, "w", _vec(self.w, n, "w"))
        object.__setattr__(self, "L_D", _mat(self.L_D, n, "L_D"))
        object.__setattr__(self, "L_P", _mat(self.L_P, n, "L_P"))
        if not (is_spd(self.L_D) and is_spd(self.L_P)):
            raise InvalidInputError("L_D and L_P must be symmetric positive definite")

    def derivative_estimate(self, e) -> np.ndarray:
        """Estimated error rate w + L_D (e - e_hat)."""
        return self.w + self.L_D @ (np.asarray(e, float) - self.e_hat)


def linear_observer_derivatives(state: LinearObserverState, e) -> tuple[np.ndarray, np.ndarray]:
    e = _vec(e, len(state.e_hat), "e")
    e_hat_dot = np.empty_like(e)
    w_dot = np.empty_like(e)
    linear_observer_k(state.e_hat, state.w, e, state.L_D, state.L_P, e_hat_dot, w_dot)
    return e_hat_dot, w_dot
