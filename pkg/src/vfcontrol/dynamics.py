"""Manipulator dynamics H(q) q'' + C(q, q') q' + G(q) = tau.

Each built-in model supplies a jitted kernel returning H(q), the inertia
gradient dH[k] = dH/dq_k and G(q).  The Coriolis matrix is always assembled
from Christoffel symbols of that gradient, so the skew-symmetry of H' - 2C
and the symmetry C(q, x) y = C(q, y) x hold for every model by construction.

All public functions accept a single configuration of shape (n,) or a batch
of shape (N, n).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import ClassVar

import numba as nb
import numpy as np

from .errors import InvalidInputError, NumericalFailure

PHANTOM3 = 0
PLANAR2 = 1
POINTMASS1 = 2


@dataclass(frozen=True)
class Phantom3Params:
    """Inertial parameters of the 3-DOF PHANToM-style arm.

    Defaults are chosen so that the inertia eigenvalue range and the
    closed-form Coriolis bound land near the published values for the
    PHANToM 1.5A (lambda_max ~ 0.0052, lambda_min ~ 0.0003, k_c ~ 0.0095).
    Fields after ``g`` are the inertias and counterweights that only enter
    the constant diagonal entries and the gravity vector.
    """

    m_a: float = 0.0202
    m_c: float = 0.0249
    l_1: float = 0.215
    l_2: float = 0.170
    l_3: float = 0.0325
    I_ayy: float = 0.0006
    I_azz: float = 0.0008
    I_beyy: float = 0.001447
    I_bezz: float = 0.0005
    I_cyy: float = 0.0000959
    I_czz: float = 0.00000959
    I_dfyy: float = 0.0004
    I_dfzz: float = 0.000551
    g: float = 9.81
    I_axx: float = 0.00004864
    I_bexx: float = 0.0011
    I_cxx: float = 0.00004
    I_dfxx: float = 0.00018
    I_baseyy: float = 0.0
    m_be: float = 0.2359
    m_df: float = 0.1906
    l_5: float = -0.0368
    l_6: float = 0.0527

    def __post_init__(self):
        for name in ("m_a", "m_c", "l_1", "l_2", "l_3"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be strictly positive")
        for f in dataclasses.fields(self):
            if f.name.startswith("I_") and getattr(self, f.name) < 0:
                raise InvalidInputError(f"{f.name} must be nonnegative")
        if self.m_be < 0 or self.m_df < 0:
            raise InvalidInputError("counterweight masses must be nonnegative")


@dataclass(frozen=True)
class Planar2Params:
    m_1: float = 1.0
    m_2: float = 1.0
    l_1: float = 1.0
    l_2: float = 1.0
    lc_1: float = 0.5
    lc_2: float = 0.5
    I_1: float = 1.0 / 12.0
    I_2: float = 1.0 / 12.0
    g: float = 9.81

    def __post_init__(self):
        for name in ("m_1", "m_2", "l_1", "l_2"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be strictly positive")
        if not (0 <= self.lc_1 <= self.l_1 and 0 <= self.lc_2 <= self.l_2):
            raise InvalidInputError("center-of-mass offsets must satisfy 0 <= lc_i <= l_i")
        if self.I_1 < 0 or self.I_2 < 0:
            raise InvalidInputError("link inertias must be nonnegative")


@dataclass(frozen=True)
class PointMass1Params:
    m: float = 1.0
    l: float = 1.0
    g: float = 9.81

    def __post_init__(self):
        if not (self.m > 0 and self.l > 0):
            raise InvalidInputError("m and l must be strictly positive")


@dataclass(frozen=True)
class RobotModel:
    """Base class: a parameter record plus the id of its jitted kernel."""

    kind: ClassVar[int]
    dof: ClassVar[int]
    name: ClassVar[str]
    params: object

    @property
    def n(self) -> int:
        return self.dof

    @property
    def param_vector(self) -> np.ndarray:
        return np.array(dataclasses.astuple(self.params), dtype=float)

    @classmethod
    def param_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls.params_type)]

    def replace(self, **changes) -> "RobotModel":
        return type(self)(dataclasses.replace(self.params, **changes))

    def perturbed(self, name: str, delta: float) -> "RobotModel":
        """Copy of the model with parameter ``name`` increased by ``delta``."""
        if name not in self.param_names():
            raise InvalidInputError(f"{self.name} has no parameter {name!r}")
        return self.replace(**{name: getattr(self.params, name) + delta})


@dataclass(frozen=True)
class Phantom3(RobotModel):
    kind: ClassVar[int] = PHANTOM3
    dof: ClassVar[int] = 3
    name: ClassVar[str] = "phantom3"
    params_type: ClassVar[type] = Phantom3Params
    params: Phantom3Params = field(default_factory=Phantom3Params)

    def alphas(self) -> tuple[float, float, float]:
        """The three coefficient groups that bound the Coriolis entries."""
        return _phantom_alphas(self.param_vector)

    def coriolis_bound(self) -> float:
        a1, a2, a3 = self.alphas()
        return 3.0 * (0.25 * max(abs(a1), abs(a2)) + abs(a3))


@dataclass(frozen=True)
class Planar2(RobotModel):
    kind: ClassVar[int] = PLANAR2
    dof: ClassVar[int] = 2
    name: ClassVar[str] = "planar2"
    params_type: ClassVar[type] = Planar2Params
    params: Planar2Params = field(default_factory=Planar2Params)


@dataclass(frozen=True)
class PointMass1(RobotModel):
    kind: ClassVar[int] = POINTMASS1
    dof: ClassVar[int] = 1
    name: ClassVar[str] = "pointmass1"
    params_type: ClassVar[type] = PointMass1Params
    params: PointMass1Params = field(default_factory=PointMass1Params)


MODELS = {cls.name: cls for cls in (Phantom3, Planar2, PointMass1)}


def make_model(model_id: str, params: dict | None = None) -> RobotModel:
    """Build a model from its id and a (possibly partial) parameter mapping."""
    try:
        cls = MODELS[model_id]
    except KeyError:
        raise InvalidInputError(
            f"unknown model {model_id!r}; expected one of {sorted(MODELS)}"
        ) from None
    params = dict(params or {})
    unknown = set(params) - set(cls.param_names())
    if unknown:
        raise InvalidInputError(f"unknown {model_id} parameter(s): {sorted(unknown)}")
    return cls(cls.params_type(**{k: float(v) for k, v in params.items()}))


# -- jitted kernels ---------------------------------------------------------


@nb.njit(cache=True)
def _phantom_alphas(p):
    m_a, m_c, l1, l2, l3 = p[0], p[1], p[2], p[3], p[4]
    a1 = 4 * p[7] - 4 * p[8] + 4 * p[9] - 4 * p[10] + 4 * l1**2 * m_a + l1**2 * m_c
    a2 = -4 * p[5] + 4 * p[6] - 4 * p[11] + 4 * p[12] + l2**2 * m_a + 4 * l3**2 * m_c
    a3 = l1 * (l2 * m_a + l3 * m_c)
    return a1, a2, a3


@nb.njit(cache=True)
def _phantom_terms(q, p, H, dH, G):
    m_a, m_c, l1, l2, l3 = p[0], p[1], p[2], p[3], p[4]
    g, m_be, m_df, l5, l6 = p[13], p[19], p[20], p[21], p[22]
    a1, a2, a3 = _phantom_alphas(p)
    k0 = (4 * (p[5] + p[6] + p[7] + p[8] + p[9] + p[10] + p[11] + p[12]) + 8 * p[18]
          + 4 * l1**2 * m_a + l2**2 * m_a + l1**2 * m_c + 4 * l3**2 * m_c)
    s2, c2 = np.sin(q[1]), np.cos(q[1])
    s3, c3 = np.sin(q[2]), np.cos(q[2])
    s23, c23 = np.sin(q[1] - q[2]), np.cos(q[1] - q[2])

    H[:, :] = 0.0
    H[0, 0] = (k0 + a1 * np.cos(2 * q[1]) - a2 * np.cos(2 * q[2]) + 8 * a3 * c2 * s3) / 8
    H[1, 1] = p[15] + p[16] + l1**2 * m_a + 0.25 * l1**2 * m_c
    H[2, 2] = p[14] + p[17] + 0.25 * l2**2 * m_a + l3**2 * m_c
    H[1, 2] = H[2, 1] = -0.5 * a3 * s23

    dH[:, :, :] = 0.0
    dH[1, 0, 0] = (-2 * a1 * np.sin(2 * q[1]) - 8 * a3 * s2 * s3) / 8
    dH[2, 0, 0] = (2 * a2 * np.sin(2 * q[2]) + 8 * a3 * c2 * c3) / 8
    dH[1, 1, 2] = dH[1, 2, 1] = -0.5 * a3 * c23
    dH[2, 1, 2] = dH[2, 2, 1] = 0.5 * a3 * c23

    G[0] = 0.0
    G[1] = 0.5 * g * (2 * l1 * m_a + 2 * l5 * m_be + l1 * m_c) * c2
    G[2] = 0.5 * g * (l2 * m_a + 2 * l3 * m_c - 2 * l6 * m_df) * s3


@nb.njit(cache=True)
def _phantom_potential(q, p):
    m_a, m_c, l1, l2, l3 = p[0], p[1], p[2], p[3], p[4]
    g, m_be, m_df, l5, l6 = p[13], p[19], p[20], p[21], p[22]
    return (0.5 * g * (2 * l1 * m_a + 2 * l5 * m_be + l1 * m_c) * np.sin(q[1])
            - 0.5 * g * (l2 * m_a + 2 * l3 * m_c - 2 * l6 * m_df) * np.cos(q[2]))


@nb.njit(cache=True)
def _planar_terms(q, p, H, dH, G):
    m1, m2, l1, lc1, lc2, I1, I2, g = p[0], p[1], p[2], p[4], p[5], p[6], p[7], p[8]
    c2, s2 = np.cos(q[1]), np.sin(q[1])
    H[0, 0] = m1 * lc1**2 + I1 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * c2) + I2
    H[0, 1] = H[1, 0] = m2 * (lc2**2 + l1 * lc2 * c2) + I2
    H[1, 1] = m2 * lc2**2 + I2
    dH[:, :, :] = 0.0
    dH[1, 0, 0] = -2 * m2 * l1 * lc2 * s2
    dH[1, 0, 1] = dH[1, 1, 0] = -m2 * l1 * lc2 * s2
    c12 = np.cos(q[0] + q[1])
    G[0] = m1 * g * lc1 * np.cos(q[0]) + m2 * g * (l1 * np.cos(q[0]) + lc2 * c12)
    G[1] = m2 * g * lc2 * c12


@nb.njit(cache=True)
def _planar_potential(q, p):
    m1, m2, l1, lc1, lc2, g = p[0], p[1], p[2], p[4], p[5], p[8]
    return m1 * g * lc1 * np.sin(q[0]) + m2 * g * (l1 * np.sin(q[0]) + lc2 * np.sin(q[0] + q[1]))


@nb.njit(cache=True)
def _pointmass_terms(q, p, H, dH, G):
    H[0, 0] = p[0] * p[1] ** 2
    dH[0, 0, 0] = 0.0
    G[0] = p[0] * p[2] * p[1] * np.cos(q[0])


@nb.njit(cache=True)
def model_terms(kind, q, p, H, dH, G):
    """Fill H(q), dH/dq and G(q) for the built-in model ``kind``."""
    if kind == PHANTOM3:
        _phantom_terms(q, p, H, dH, G)
    elif kind == PLANAR2:
        _planar_terms(q, p, H, dH, G)
    else:
        _pointmass_terms(q, p, H, dH, G)


@nb.njit(cache=True)
def model_potential(kind, q, p):
    if kind == PHANTOM3:
        return _phantom_potential(q, p)
    elif kind == PLANAR2:
        return _planar_potential(q, p)
    return p[0] * p[2] * p[1] * np.sin(q[0])


@nb.njit(cache=True)
def christoffel_coriolis(dH, v, C):
    """C_ij = sum_k 1/2 (dH_ij/dq_k + dH_ik/dq_j - dH_jk/dq_i) v_k."""
    n = v.shape[0]
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += 0.5 * (dH[k, i, j] + dH[j, i, k] - dH[i, j, k]) * v[k]
            C[i, j] = acc


@nb.njit(cache=True)
def spd_solve(A, b, x):
    """Cholesky solve A x = b in place; returns False if A is not SPD."""
    n = b.shape[0]
    Lc = np.zeros((n, n))
    for j in range(n):
        d = A[j, j]
        for k in range(j):
            d -= Lc[j, k] * Lc[j, k]
        if not d > 0.0:
            return False
        Lc[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= Lc[i, k] * Lc[j, k]
            Lc[i, j] = s / Lc[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= Lc[i, k] * x[k]
        x[i] = s / Lc[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= Lc[k, i] * x[k]
        x[i] = s / Lc[i, i]
    return True


@nb.njit(cache=True)
def _terms_batch(kind, Q, p, H, dH, G):
    for s in range(Q.shape[0]):
        model_terms(kind, Q[s], p, H[s], dH[s], G[s])


@nb.njit(cache=True)
def _potential_batch(kind, Q, p, out):
    for s in range(Q.shape[0]):
        out[s] = model_potential(kind, Q[s], p)


# -- public numpy API -------------------------------------------------------


def _joint_batch(model: RobotModel, x, name: str = "q") -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != model.n:
        raise InvalidInputError(
            f"{name} must have shape ({model.n},) or (N, {model.n}); got {np.shape(x)}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr), single


def _terms(model: RobotModel, Q: np.ndarray):
    N, n = Q.shape
    H = np.empty((N, n, n))
    dH = np.empty((N, n, n, n))
    G = np.empty((N, n))
    _terms_batch(model.kind, Q, model.param_vector, H, dH, G)
    return H, dH, G


def inertia(model: RobotModel, q) -> np.ndarray:
    Q, single = _joint_batch(model, q)
    H = _terms(model, Q)[0]
    return H[0] if single else H


def inertia_gradient(model: RobotModel, q) -> np.ndarray:
    """Array ``dH`` with ``dH[..., k, i, j] = dH_ij / dq_k``."""
    Q, single = _joint_batch(model, q)
    dH = _terms(model, Q)[1]
    return dH[0] if single else dH


def gravity(model: RobotModel, q) -> np.ndarray:
    Q, single = _joint_batch(model, q)
    G = _terms(model, Q)[2]
    return G[0] if single else G


def potential(model: RobotModel, q) -> np.ndarray | float:
    Q, single = _joint_batch(model, q)
    out = np.empty(Q.shape[0])
    _potential_batch(model.kind, Q, model.param_vector, out)
    return float(out[0]) if single else out


def coriolis_from_gradient(dH: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorised Christoffel contraction, broadcasting over leading axes."""
    # gamma[..., k, i, j] = 1/2 (dH[k,i,j] + dH[j,i,k] - dH[i,j,k])
    gamma = 0.5 * (dH + np.swapaxes(dH, -3, -1) - np.moveaxis(dH, -1, -3))
    return np.einsum("...kij,...k->...ij", gamma, v)


def coriolis(model: RobotModel, q, v) -> np.ndarray:
    Q, single = _joint_batch(model, q)
    V, single_v = _joint_batch(model, v, "v")
    if V.shape[0] != Q.shape[0] and V.shape[0] != 1 and Q.shape[0] != 1:
        raise InvalidInputError("q and v batch sizes differ")
    dH = _terms(model, Q)[1]
    C = coriolis_from_gradient(dH, V)
    return C[0] if (single and single_v) else C


def forward_dynamics(model: RobotModel, q, v, tau) -> np.ndarray:
    """Joint accelerations solving H(q) a = tau - C(q, v) v - G(q)."""
    Q, single = _joint_batch(model, q)
    V, _ = _joint_batch(model, v, "v")
    T, _ = _joint_batch(model, tau, "tau")
    H, dH, G = _terms(model, Q)
    C = coriolis_from_gradient(dH, V)
    rhs = T - np.einsum("...ij,...j->...i", C, V) - G
    try:
        Lc = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("inertia matrix is not positive definite") from exc
    y = np.linalg.solve(Lc, rhs[..., None])
    acc = np.linalg.solve(np.swapaxes(Lc, -1, -2), y)[..., 0]
    if not np.all(np.isfinite(acc)):
        raise NumericalFailure("non-finite joint acceleration")
    return acc[0] if single else acc


@dataclass(frozen=True)
class ModelConstants:
    lambda_min_H: float
    lambda_max_H: float
    k_c: float
    k_g: float
    sample_count: int


def sample_configurations(model: RobotModel, samples: int, seed: int = 0,
                          span: float = np.pi) -> np.ndarray:
    """Regular grid over [-span, span]^n topped up with uniform random draws."""
    if samples <= 0:
        raise InvalidInputError("sampling grid is empty")
    n = model.n
    per_axis = max(int(np.floor(samples ** (1.0 / n))), 1)
    axis = np.linspace(-span, span, per_axis, endpoint=False) if per_axis > 1 else np.zeros(1)
    grid = np.stack(np.meshgrid(*[axis] * n, indexing="ij"), axis=-1).reshape(-1, n)
    rng = np.random.default_rng(seed)
    extra = rng.uniform(-span, span, size=(max(samples - len(grid), 0), n))
    return np.concatenate([grid, extra])[:samples]


def coriolis_gain(dH: np.ndarray) -> np.ndarray:
    """Per-sample bound on sup_x ||C(q, x)||_2 / ||x||.

    C(q, x) is linear in x; stacking its entries gives an (n*n, n) matrix whose
    largest singular value bounds the spectral norm through the Frobenius norm.
    """
    n = dH.shape[-1]
    cols = [coriolis_from_gradient(dH, np.eye(n)[k]).reshape(dH.shape[0], -1) for k in range(n)]
    M = np.stack(cols, axis=-1)
    return np.linalg.svd(M, compute_uv=False)[..., 0]


def gravity_jacobian(model: RobotModel, Q: np.ndarray, h: float = 1e-6) -> np.ndarray:
    n = model.n
    J = np.empty((Q.shape[0], n, n))
    for k in range(n):
        dq = np.zeros(n)
        dq[k] = h
        J[:, :, k] = (gravity(model, Q + dq) - gravity(model, Q - dq)) / (2 * h)
    return J


def model_constants(model: RobotModel, samples: int = 4096, seed: int = 0,
                    inflation: float = 1.1) -> ModelConstants:
    """Inertia eigenvalue extrema and the Coriolis / gravity-gradient bounds.

    For the PHANToM-style model k_c comes from the closed-form coefficient
    bound; otherwise it is the sampled supremum inflated by ``inflation``.
    """
    Q = sample_configurations(model, samples, seed)
    H, dH, _ = _terms(model, Q)
    eig = np.linalg.eigvalsh(H)
    if isinstance(model, Phantom3):
        k_c = model.coriolis_bound()
    else:
        k_c = inflation * float(coriolis_gain(dH).max())
    k_g = inflation * float(np.linalg.norm(gravity_jacobian(model, Q), ord=2, axis=(1, 2)).max())
    lam_min, lam_max = float(eig.min()), float(eig.max())
    if not lam_min > 0:
        raise NumericalFailure(f"inertia matrix not positive definite (lambda_min={lam_min:g})")
    return ModelConstants(lam_min, lam_max, k_c, k_g, len(Q))
