"""The six position-feedback control laws and their gain conditions.

Regulators: R1 (observer + PD + gravity), R2 (dirty derivative + PD +
gravity), R3 (dirty derivative PID without gravity).  Trackers: T1
(observer-based), T2 (dirty derivative with feedforward), T3 (linear
observer, model-free).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import dynamics
from .dynamics import ModelConstants, RobotModel
from .errors import InvalidInputError
from .signals import (DirtyDiffState, LinearObserverState, NicosiaObserverState,
                      is_spd)

CONTROLLERS = ("R1", "R2", "R3", "T1", "T2", "T3")
CODE = {name: i for i, name in enumerate(CONTROLLERS)}
R1, R2, R3, T1, T2, T3 = range(6)

# Internal state blocks per law, each of length n, in engine order.
STATE_LAYOUT = {
    "R1": ("q_hat", "v_hat"),
    "R2": ("z",),
    "R3": ("z", "nu"),
    "T1": ("q_hat", "v_hat"),
    "T2": ("z",),
    "T3": ("e_hat", "w"),
}

REQUIRED_GAINS = {
    "R1": ("K_P", "K_D", "k_D_obs", "L_obs"),
    "R2": ("K_P", "K_D", "b", "l"),
    "R3": ("K_P", "K_D", "K_I", "b", "l"),
    "T1": ("K_P", "K_D", "k_D_obs", "L_obs"),
    "T2": ("K_P", "K_D", "b", "l"),
    "T3": ("K_P", "K_D", "L_P", "L_D"),
}


def _check_id(controller: str) -> str:
    if controller not in CODE:
        raise InvalidInputError(f"unknown controller {controller!r}; expected one of {CONTROLLERS}")
    return controller


@dataclass(frozen=True)
class Gains:
    """Gain set; a law only reads the fields listed in ``REQUIRED_GAINS``.

    ``b`` and ``l`` hold the diagonals of the filter matrices B and L.
    """

    K_P: np.ndarray | None = None
    K_D: np.ndarray | None = None
    K_I: np.ndarray | None = None
    b: np.ndarray | None = None
    l: np.ndarray | None = None
    k_D_obs: float | None = None
    L_obs: np.ndarray | None = None
    L_P: np.ndarray | None = None
    L_D: np.ndarray | None = None

    @classmethod
    def from_scalars(cls, controller: str, n: int, alpha_P=None, alpha_D=None, alpha_I=None,
                     alpha_L=None, b=None, k_D_obs=None, alpha_LP=None, alpha_LD=None) -> "Gains":
        """Diagonal gain structure K_P = alpha_P I, K_D = alpha_D I, L = alpha_L I.

        ``alpha_L`` is the observer matrix for R1/T1 and the filter pole
        for the dirty-derivative laws.
        """
        _check_id(controller)
        eye = np.eye(n)
        scaled = lambda a: None if a is None else float(a) * eye  # noqa: E731
        diag = lambda a: None if a is None else np.full(n, float(a))  # noqa: E731
        observer = controller in ("R1", "T1")
        return cls(
            K_P=scaled(alpha_P), K_D=scaled(alpha_D), K_I=scaled(alpha_I),
            b=diag(b), l=None if observer else diag(alpha_L),
            k_D_obs=None if k_D_obs is None else float(k_D_obs),
            L_obs=scaled(alpha_L) if observer else None,
            L_P=scaled(alpha_LP), L_D=scaled(alpha_LD),
        )

    def validated(self, controller: str, n: int) -> "Gains":
        """Check that every gain the law needs is present and well-formed."""
        _check_id(controller)
        for name in REQUIRED_GAINS[controller]:
            value = getattr(self, name)
            if value is None:
                raise InvalidInputError(f"controller {controller} requires gain {name}")
            if name == "k_D_obs":
                if not float(value) > 0:
                    raise InvalidInputError("k_D_obs must be positive")
            elif name in ("b", "l"):
                arr = np.asarray(value, float)
                if arr.shape != (n,) or np.any(arr <= 0):
                    raise InvalidInputError(f"{name} must be {n} positive entries")
            else:
                arr = np.asarray(value, float)
                if arr.shape != (n, n):
                    raise InvalidInputError(f"{name} must be {n}x{n}")
                if not is_spd(arr):
                    raise InvalidInputError(f"{name} must be symmetric positive definite")
        return self

    def scaled(self, factor: float) -> "Gains":
        """All matrix and scalar gains multiplied by ``factor``."""
        f = lambda x: None if x is None else factor * np.asarray(x, float)  # noqa: E731
        return Gains(f(self.K_P), f(self.K_D), f(self.K_I), f(self.b), f(self.l),
                     None if self.k_D_obs is None else factor * self.k_D_obs,
                     f(self.L_obs), f(self.L_P), f(self.L_D))


# -- jitted torque kernels --------------------------------------------------


@nb.njit(cache=True)
def _matvec_sub(M, x, out):
    n = x.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += M[i, j] * x[j]
        out[i] -= acc


@nb.njit(cache=True)
def r1_k(q, qd, q_hat, v_hat, k_obs, KP, KD, G, tau):
    n = q.shape[0]
    err = q - qd
    qhd = v_hat + k_obs * (q - q_hat)
    for i in range(n):
        tau[i] = G[i]
    _matvec_sub(KP, err, tau)
    _matvec_sub(KD, qhd, tau)


@nb.njit(cache=True)
def r2_k(q, qd, theta, KP, KD, G, tau):
    for i in range(q.shape[0]):
        tau[i] = G[i]
    _matvec_sub(KD, theta, tau)
    _matvec_sub(KP, q - qd, tau)


@nb.njit(cache=True)
def r3_k(q, qd, theta, nu, KP, KD, KI, tau, nu_dot):
    err = q - qd
    for i in range(q.shape[0]):
        tau[i] = nu[i]
        nu_dot[i] = 0.0
    _matvec_sub(KP, err, tau)
    _matvec_sub(KD, theta, tau)
    _matvec_sub(KI, err - theta, nu_dot)


@nb.njit(cache=True)
def _feedforward(qd_dot, qd_ddot, C, H, G, tau):
    n = G.shape[0]
    for i in range(n):
        acc = G[i]
        for j in range(n):
            acc += H[i, j] * qd_ddot[j] + C[i, j] * qd_dot[j]
        tau[i] = acc


@nb.njit(cache=True)
def t1_k(q, qd, qd_dot, qd_ddot, q_hat, v_hat, k_obs, KP, KD, H, dH, G, tau):
    n = q.shape[0]
    qhd = v_hat + k_obs * (q - q_hat)
    C = np.empty((n, n))
    dynamics.christoffel_coriolis(dH, qhd, C)
    _feedforward(qd_dot, qd_ddot, C, H, G, tau)
    _matvec_sub(KP, q - qd, tau)
    _matvec_sub(KD, qhd - qd_dot, tau)


@nb.njit(cache=True)
def t2_k(q, qd, qd_dot, qd_ddot, theta, KP, KD, H, dH, G, tau):
    n = q.shape[0]
    C = np.empty((n, n))
    dynamics.christoffel_coriolis(dH, qd_dot, C)
    _feedforward(qd_dot, qd_ddot, C, H, G, tau)
    _matvec_sub(KP, q - qd, tau)
    _matvec_sub(KD, theta, tau)


@nb.njit(cache=True)
def t3_k(e, e_hat, w, KP, KD, L_D, tau):
    n = e.shape[0]
    e_hat_dot = w.copy()
    for i in range(n):
        tau[i] = 0.0
        for j in range(n):
            e_hat_dot[i] += L_D[i, j] * (e[j] - e_hat[j])
    _matvec_sub(KD, e_hat_dot, tau)
    _matvec_sub(KP, e_hat, tau)


# -- python wrappers --------------------------------------------------------


def _arr(x):
    return np.ascontiguousarray(np.asarray(x, dtype=float))


def _model_terms(model: RobotModel, q):
    return (dynamics.inertia(model, q), dynamics.inertia_gradient(model, q),
            dynamics.gravity(model, q))


def r1_torque(q, q_d, state: NicosiaObserverState, gains: Gains, model: RobotModel):
    """G(q) - K_P (q - q_d) - K_D (v_hat + k_D (q - q_hat))."""
    q, q_d = _arr(q), _arr(q_d)
    tau = np.empty_like(q)
    r1_k(q, q_d, state.q_hat, state.v_hat, float(state.k_D), _arr(gains.K_P), _arr(gains.K_D),
         dynamics.gravity(model, q), tau)
    return tau


def r2_torque(q, q_d, state: DirtyDiffState, gains: Gains, model: RobotModel):
    """G(q) - K_D theta - K_P (q - q_d), theta filtered from q."""
    q, q_d = _arr(q), _arr(q_d)
    tau = np.empty_like(q)
    r2_k(q, q_d, state.output(q), _arr(gains.K_P), _arr(gains.K_D), dynamics.gravity(model, q), tau)
    return tau


@dataclass(frozen=True)
class R3State:
    filter: DirtyDiffState
    nu: np.ndarray = field(default=None)

    def __post_init__(self):
        nu = np.zeros_like(self.filter.z) if self.nu is None else _arr(self.nu)
        if nu.shape != self.filter.z.shape or not np.all(np.isfinite(nu)):
            raise InvalidInputError("nu must be a finite vector matching the filter state")
        object.__setattr__(self, "nu", nu)


def _r3(q, q_d, state: R3State, gains: Gains):
    q, q_d = _arr(q), _arr(q_d)
    tau = np.empty_like(q)
    nu_dot = np.empty_like(q)
    r3_k(q, q_d, state.filter.output(q), state.nu, _arr(gains.K_P), _arr(gains.K_D),
         _arr(gains.K_I), tau, nu_dot)
    return tau, nu_dot


def r3_torque(q, q_d, state: R3State, gains: Gains, model: RobotModel | None = None):
    """-K_P (q - q_d) + nu - K_D theta.  Never touches the model."""
    return _r3(q, q_d, state, gains)[0]


def r3_integral_rate(q, q_d, state: R3State, gains: Gains):
    """nu' = -K_I (q - q_d - theta)."""
    return _r3(q, q_d, state, gains)[1]


def t1_torque(q, ref_sample, state: NicosiaObserverState, gains: Gains, model: RobotModel):
    """H q_d'' + C(q, q_hat') q_d' + G - K_P e - K_D (q_hat' - q_d')."""
    q = _arr(q)
    qd, qd_dot, qd_ddot = (_arr(x) for x in ref_sample)
    H, dH, G = _model_terms(model, q)
    tau = np.empty_like(q)
    t1_k(q, qd, qd_dot, qd_ddot, state.q_hat, state.v_hat, float(state.k_D),
         _arr(gains.K_P), _arr(gains.K_D), H, dH, G, tau)
    return tau


def t2_torque(q, ref_sample, state: DirtyDiffState, gains: Gains, model: RobotModel):
    """H q_d'' + C(q, q_d') q_d' + G - K_P e - K_D theta, filter driven by e = q - q_d."""
    q = _arr(q)
    qd, qd_dot, qd_ddot = (_arr(x) for x in ref_sample)
    H, dH, G = _model_terms(model, q)
    tau = np.empty_like(q)
    t2_k(q, qd, qd_dot, qd_ddot, state.output(q - qd), _arr(gains.K_P), _arr(gains.K_D),
         H, dH, G, tau)
    return tau


def t3_torque(e, state: LinearObserverState, gains: Gains):
    """-K_D (w + L_D (e - e_hat)) - K_P e_hat; model-free."""
    e = _arr(e)
    tau = np.empty_like(e)
    t3_k(e, state.e_hat, state.w, _arr(gains.K_P), _arr(gains.K_D), state.L_D, tau)
    return tau


# -- gain conditions --------------------------------------------------------


@dataclass(frozen=True)
class GainCheck:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    note: str = ""


@dataclass(frozen=True)
class GainCheckReport:
    controller: str
    checks: tuple[GainCheck, ...]

    @property
    def verdict(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def row(self, name: str) -> GainCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def render(self) -> str:
        lines = [f"controller: {self.controller}",
                 f"{'condition':<28} {'lhs':>14} {'rhs':>14}  status"]
        for c in self.checks:
            status = "ok" if c.satisfied else "VIOLATED"
            lines.append(f"{c.name:<28} {c.lhs:>14.6g} {c.rhs:>14.6g}  {status}"
                         + (f"  ({c.note})" if c.note else ""))
        lines.append(f"verdict: {'satisfied' if self.verdict else 'violated (warning only)'}")
        return "\n".join(lines)


def _eig(A):
    w = np.linalg.eigvalsh(np.asarray(A, float))
    return float(w[0]), float(w[-1])


def _gt(name, lhs, rhs, note=""):
    return GainCheck(name, float(lhs), float(rhs), bool(lhs > rhs), note)


def _need(value, name, controller):
    if value is None:
        raise InvalidInputError(f"{name} is required for the {controller} gain check")
    return float(value)


def check_gains(controller: str, gains: Gains, constants: ModelConstants | None,
                k_q: float | None = None, k_delta: float | None = None,
                beta: float | None = 0.5) -> GainCheckReport:
    """Evaluate every inequality that applies to ``controller``.

    Violations are reported, not raised: several of the bounds are known to
    be conservative.
    """
    _check_id(controller)
    if constants is None:
        raise InvalidInputError("model constants are required for gain checks")
    lam_min = _need(constants.lambda_min_H, "lambda_min_H", controller)
    lam_max = _need(constants.lambda_max_H, "lambda_max_H", controller)
    for name in REQUIRED_GAINS[controller]:
        if getattr(gains, name) is None:
            raise InvalidInputError(f"gain {name} is required for the {controller} gain check")

    rows: list[GainCheck] = []
    for name in REQUIRED_GAINS[controller]:
        if name in ("k_D_obs",):
            continue
        value = np.asarray(getattr(gains, name), float)
        if name in ("b", "l"):
            rows.append(_gt(f"{name}_positive", value.min(), 0.0))
        else:
            rows.append(_gt(f"{name}_positive_definite", _eig(value)[0], 0.0))

    kd_min, kd_max = _eig(gains.K_D)
    if controller == "R1":
        rhs = 0.25 * kd_max**2 / (kd_min * lam_min)
        rows.append(_gt("observer_gain", gains.k_D_obs, rhs))
        if k_q is not None:
            k_c = _need(constants.k_c, "k_c", controller)
            rows.append(_gt("observer_velocity_bound", gains.k_D_obs, k_c * k_q / lam_min))
    elif controller == "R3":
        k_g = _need(constants.k_g, "k_g", controller)
        rows.append(_gt("filter_gain", np.min(gains.b), 2 * lam_max / lam_min))
        rows.append(_gt("proportional_gain", _eig(gains.K_P)[0], 4 * k_g + 1))
    elif controller == "T1":
        k_c = _need(constants.k_c, "k_c", controller)
        kq = _need(k_q, "k_q", controller)
        rhs = k_c / lam_min * (kq + 0.25 * (kd_max + k_c * kq) ** 2 / (kd_min * k_c))
        rows.append(_gt("observer_tracking_gain", gains.k_D_obs, rhs))
    elif controller == "T2":
        k_c = _need(constants.k_c, "k_c", controller)
        kdelta = _need(k_delta, "k_delta", controller)
        bt = _need(beta, "beta", controller)
        if not 0 < bt < 1:
            raise InvalidInputError("beta must lie in (0, 1)")
        b, l = np.asarray(gains.b, float), np.asarray(gains.l, float)
        rows.append(_gt("semiglobal_filter_gain", b.min(), lam_max / (bt * lam_min),
                        f"beta={bt:g}"))
        k_dm = float(np.min(np.diag(np.asarray(gains.K_D, float))))
        rows.append(_gt("global_condition", 0.5 * k_dm * b.min() / l.max(), k_c * kdelta,
                        "a_M taken as largest filter pole l_M"))
    return GainCheckReport(controller, tuple(rows))
