"""Numeric property suites for a robot model and the dirty-derivative filter.

Each suite samples its own inputs from a seeded generator and reports the
worst residual against a tolerance, so a fixed seed gives an identical report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import RobotModel
from .signals import DirtyDiffState, dirty_diff_derivatives
from .simulation import rk4_step


@dataclass(frozen=True)
class PropertyResult:
    name: str
    worst: float
    tol: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst) and self.worst <= self.tol)


@dataclass(frozen=True)
class ValidationReport:
    model: str
    samples: int
    seed: int
    results: tuple[PropertyResult, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def result(self, name: str) -> PropertyResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def render(self) -> str:
        lines = [f"model: {self.model}  samples: {self.samples}  seed: {self.seed}",
                 f"{'property':<28} {'worst':>12} {'tol':>10}  status"]
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            note = f"  ({r.note})" if r.note else ""
            lines.append(f"{r.name:<28} {r.worst:12.3e} {r.tol:10.1e}  {status}{note}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _rayleigh_bounds(model, Q, X, constants):
    H = dynamics.inertia(model, Q)
    asym = np.abs(H - np.swapaxes(H, -1, -2)).max()
    eig = np.linalg.eigvalsh(H)
    quad = np.einsum("si,sij,sj->s", X, H, X) / np.einsum("si,si->s", X, X)
    # how far the Rayleigh quotient strays outside the reported eigenvalue band
    spill = max(constants.lambda_min_H - quad.min(), quad.max() - constants.lambda_max_H, 0.0)
    spill /= constants.lambda_max_H
    return asym, float(eig.min()), spill


def inertia_property(model, Q, X, constants) -> list[PropertyResult]:
    asym, lam, spill = _rayleigh_bounds(model, Q, X, constants)
    return [
        PropertyResult("inertia_symmetry", float(asym), 1e-12),
        PropertyResult("inertia_positive", float(-lam) if lam <= 0 else 0.0, 0.0,
                       f"smallest eigenvalue {lam:.4g}"),
        PropertyResult("inertia_bounds", float(spill), 1e-3,
                       f"band [{constants.lambda_min_H:.4g}, {constants.lambda_max_H:.4g}]"),
    ]


def skew_property(model, Q, V, X, h=1e-5) -> PropertyResult:
    """x'(Hdot - 2C)x with Hdot from central differences of H along v."""
    H_plus = dynamics.inertia(model, Q + h * V)
    H_minus = dynamics.inertia(model, Q - h * V)
    H_dot = (H_plus - H_minus) / (2 * h)
    C = dynamics.coriolis(model, Q, V)
    N = H_dot - 2 * C
    res = np.abs(np.einsum("si,sij,sj->s", X, N, X))
    scale = np.einsum("si,si->s", X, X) * np.linalg.norm(V, axis=1)
    return PropertyResult("skew_symmetry", float((res / scale).max()), 1e-6,
                          "finite-difference Hdot, scaled by |x|^2 |v|")


def coriolis_bound_property(model, Q, X, k_c) -> PropertyResult:
    C = dynamics.coriolis(model, Q, X)
    ratio = np.linalg.norm(C, ord=2, axis=(-2, -1)) / np.linalg.norm(X, axis=1)
    note = f"sup |C(q,x)|/|x| over k_c = {k_c:.4g}"
    if k_c == 0:
        return PropertyResult("coriolis_bound", float(ratio.max()), 0.0, "k_c = 0")
    return PropertyResult("coriolis_bound", float(ratio.max() / k_c), 1.0, note)


def coriolis_exchange_property(model, Q, X, Y) -> PropertyResult:
    Cx_y = np.einsum("sij,sj->si", dynamics.coriolis(model, Q, X), Y)
    Cy_x = np.einsum("sij,sj->si", dynamics.coriolis(model, Q, Y), X)
    res = np.linalg.norm(Cx_y - Cy_x, axis=1)
    scale = 1 + np.linalg.norm(X, axis=1) * np.linalg.norm(Y, axis=1)
    return PropertyResult("coriolis_exchange", float((res / scale).max()), 1e-10)


def gravity_potential_property(model, Q, h=1e-6) -> PropertyResult:
    G = dynamics.gravity(model, Q)
    fd = np.empty_like(G)
    for k in range(model.n):
        e = np.zeros(model.n)
        e[k] = h
        fd[:, k] = (dynamics.potential(model, Q + e) - dynamics.potential(model, Q - e)) / (2 * h)
    scale = 1 + np.abs(G).max()
    return PropertyResult("gravity_gradient", float(np.abs(G - fd).max() / scale), 1e-6)


def energy_property(model, seed=0, T=1.0, dt=1e-3, amplitude=None) -> PropertyResult:
    """Kinetic + potential energy change equals the work of tau along the path.

    With tau = G + u the kinetic part alone changes by the work of u; checking
    the total also ties G to the potential. The work integral rides along as
    an extra state so both sides carry the same integration error.
    """
    n = model.n
    rng = np.random.default_rng(seed)
    q0 = rng.uniform(-1, 1, n)
    freq = rng.uniform(1, 5, n)
    if amplitude is None:
        # accelerations of order 10 rad/s^2 whatever the model's scale
        amplitude = 10 * float(np.linalg.eigvalsh(dynamics.inertia(model, q0)).min())

    def rhs(t, x):
        q, v = x[:n], x[n:2 * n]
        u = amplitude * np.sin(freq * t)
        tau = dynamics.gravity(model, q) + u
        acc = dynamics.forward_dynamics(model, q, v, tau)
        return np.concatenate([v, acc, [v @ tau]])

    def energy(x):
        q, v = x[:n], x[n:2 * n]
        return 0.5 * v @ dynamics.inertia(model, q) @ v + dynamics.potential(model, q)

    x = np.concatenate([q0, np.zeros(n), [0.0]])
    E0 = energy(x)
    steps = int(round(T / dt))
    for k in range(steps):
        x = rk4_step(rhs, x, k * dt, dt)
    gain = energy(x) - E0
    work = x[-1]
    scale = max(abs(work), abs(gain), 1e-300)
    return PropertyResult("energy_balance", float(abs(gain - work) / scale), 1e-6,
                          f"work {work:.4g}")


def filter_response_property(b=5.0, l=100.0, dt=1e-3, count=20, w_min=1.0) -> PropertyResult:
    """Steady-state gain of b s/(s+l) at log-spaced frequencies up to 1/(10 dt)."""
    w = np.logspace(np.log10(w_min), np.log10(1.0 / (10 * dt)), count)
    state = DirtyDiffState.settled(np.zeros(count), np.full(count, b), np.full(count, l))
    settle = 10.0 / l
    T = settle + 2 * 2 * np.pi / w.min()
    steps = int(np.ceil(T / dt))

    def rhs(t, z):
        return dirty_diff_derivatives(DirtyDiffState(z, state.b, state.l), np.sin(w * t))[0]

    z = state.z
    ts = np.arange(steps + 1) * dt
    out = np.empty((steps + 1, count))
    for k in range(steps + 1):
        out[k] = state.b * (np.sin(w * ts[k]) - state.l * z)
        if k < steps:
            z = rk4_step(rhs, z, ts[k], dt)
    keep = ts >= settle
    gains = np.empty(count)
    for j in range(count):
        basis = np.column_stack([np.sin(w[j] * ts[keep]), np.cos(w[j] * ts[keep])])
        coef, *_ = np.linalg.lstsq(basis, out[keep, j], rcond=None)
        gains[j] = np.hypot(*coef)
    expected = b * w / np.sqrt(l**2 + w**2)
    rel = np.abs(gains / expected - 1)
    return PropertyResult("filter_frequency_response", float(rel.max()), 1e-2,
                          f"{count} frequencies in [{w[0]:.3g}, {w[-1]:.3g}] rad/s")


def structural_properties(model: RobotModel, samples: int = 10_000, seed: int = 0,
                          constants=None) -> list[PropertyResult]:
    """Inertia bounds, skew symmetry, the Coriolis bound and exchange, gravity gradient."""
    if constants is None:
        constants = dynamics.model_constants(model, seed=seed + 1)
    rng = np.random.default_rng(seed)
    n = model.n
    Q = rng.uniform(-np.pi, np.pi, (samples, n))
    V, X, Y = (rng.normal(size=(samples, n)) for _ in range(3))
    return [
        *inertia_property(model, Q, X, constants),
        skew_property(model, Q, V, X),
        coriolis_bound_property(model, Q, X, constants.k_c),
        coriolis_exchange_property(model, Q, X, Y),
        gravity_potential_property(model, Q[: min(samples, 2000)]),
    ]


def validate_model(model: RobotModel, samples: int = 10_000, seed: int = 0,
                   dt: float = 1e-3) -> ValidationReport:
    results = [
        *structural_properties(model, samples, seed),
        energy_property(model, seed=seed, dt=dt),
        filter_response_property(dt=dt),
    ]
    return ValidationReport(model.name, samples, seed, tuple(results))
