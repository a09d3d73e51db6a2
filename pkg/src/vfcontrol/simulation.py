"""Closed-loop simulation: plant + law + observer/filter as one augmented ODE.

The augmented state is [q, q', controller state] and is advanced with
classical fixed-step RK4; the law is re-evaluated at every stage.  The
controller always uses the nominal model, while scheduled disturbances
change the plant parameters from a given step onward.
"""
from __future__ import annotations

import io
import math
import os
import tempfile
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import controllers as ctl
from . import dynamics
from .controllers import Gains
from .dynamics import RobotModel
from .errors import InvalidInputError, NumericalFailure
from .references import SinusoidReference
from .signals import dirty_diff_k, linear_observer_k, nicosia_observer_k

COMPLETED = 0
DIVERGED = 1
SOLVE_FAILED = 2


def rk4_step(f, x, t: float, dt: float):
    """One classical RK4 step of x' = f(t, x)."""
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(f(t, x), dtype=float)
    k2 = np.asarray(f(t + dt / 2, x + dt / 2 * k1), dtype=float)
    k3 = np.asarray(f(t + dt / 2, x + dt / 2 * k2), dtype=float)
    k4 = np.asarray(f(t + dt, x + dt * k3), dtype=float)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NumericalFailure("non-finite derivative in RK4 stage")
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


# -- jitted engine ----------------------------------------------------------


@nb.njit(cache=True)
def _closed_loop(kind, pp, cp, same, law, KP, KD, KI, b, l, k_obs, L_obs, L_P, L_D,
                 r_off, r_amp, r_frq, r_phs, t, x, xdot, tau, Hp, dHp, Gp, Hc, dHc, Gc):
    n = r_off.shape[0]
    q = x[:n]
    v = x[n:2 * n]
    s = x[2 * n:]
    qd = np.empty(n)
    qd_dot = np.empty(n)
    qd_ddot = np.empty(n)
    for i in range(n):
        arg = r_frq[i] * t + r_phs[i]
        sn = np.sin(arg)
        qd[i] = r_off[i] + r_amp[i] * sn
        qd_dot[i] = r_amp[i] * r_frq[i] * np.cos(arg)
        qd_ddot[i] = -r_amp[i] * r_frq[i] ** 2 * sn

    dynamics.model_terms(kind, q, pp, Hp, dHp, Gp)
    if same:
        Hc[:, :] = Hp
        dHc[:, :, :] = dHp
        Gc[:] = Gp
    elif law != ctl.R3 and law != ctl.T3:
        dynamics.model_terms(kind, q, cp, Hc, dHc, Gc)

    sdot = xdot[2 * n:]
    ok = True
    if law == ctl.R1 or law == ctl.T1:
        q_hat = s[:n]
        v_hat = s[n:]
        if law == ctl.R1:
            ctl.r1_k(q, qd, q_hat, v_hat, k_obs, KP, KD, Gc, tau)
        else:
            ctl.t1_k(q, qd, qd_dot, qd_ddot, q_hat, v_hat, k_obs, KP, KD, Hc, dHc, Gc, tau)
        qh_dot = np.empty(n)
        vh_dot = np.empty(n)
        ok = nicosia_observer_k(q_hat, v_hat, q, tau, k_obs, L_obs, Hc, dHc, Gc, qh_dot, vh_dot)
        sdot[:n] = qh_dot
        sdot[n:] = vh_dot
    elif law == ctl.R2 or law == ctl.R3:
        theta = np.empty(n)
        z_dot = np.empty(n)
        dirty_diff_k(s[:n], q, b, l, z_dot, theta)
        sdot[:n] = z_dot
        if law == ctl.R2:
            ctl.r2_k(q, qd, theta, KP, KD, Gc, tau)
        else:
            nu_dot = np.empty(n)
            ctl.r3_k(q, qd, theta, s[n:], KP, KD, KI, tau, nu_dot)
            sdot[n:] = nu_dot
    elif law == ctl.T2:
        theta = np.empty(n)
        z_dot = np.empty(n)
        dirty_diff_k(s[:n], q - qd, b, l, z_dot, theta)
        sdot[:n] = z_dot
        ctl.t2_k(q, qd, qd_dot, qd_ddot, theta, KP, KD, Hc, dHc, Gc, tau)
    else:
        e = q - qd
        e_hat = s[:n]
        w = s[n:]
        ctl.t3_k(e, e_hat, w, KP, KD, L_D, tau)
        eh_dot = np.empty(n)
        w_dot = np.empty(n)
        linear_observer_k(e_hat, w, e, L_D, L_P, eh_dot, w_dot)
        sdot[:n] = eh_dot
        sdot[n:] = w_dot

    C = np.empty((n, n))
    dynamics.christoffel_coriolis(dHp, v, C)
    rhs = np.empty(n)
    for i in range(n):
        acc = tau[i] - Gp[i]
        for j in range(n):
            acc -= C[i, j] * v[j]
        rhs[i] = acc
    acc_out = np.empty(n)
    ok = dynamics.spd_solve(Hp, rhs, acc_out) and ok
    xdot[:n] = v
    xdot[n:2 * n] = acc_out
    return ok


@nb.njit(cache=True)
def _finite(x):
    for i in range(x.shape[0]):
        if not np.isfinite(x[i]):
            return False
    return True


@nb.njit(cache=True)
def _integrate(kind, plant_P, seg_start, cp, law, KP, KD, KI, b, l, k_obs, L_obs, L_P, L_D,
               r_off, r_amp, r_frq, r_phs, x0, dt, nsteps, record_every, threshold,
               X_rec, tau_rec):
    n = r_off.shape[0]
    dim = x0.shape[0]
    Hp = np.empty((n, n))
    dHp = np.empty((n, n, n))
    Gp = np.empty(n)
    Hc = np.empty((n, n))
    dHc = np.empty((n, n, n))
    Gc = np.empty(n)
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tau = np.empty(n)
    tau_s = np.empty(n)
    x = x0.copy()
    xs = np.empty(dim)
    seg = 0
    n_rec = 0
    for k in range(nsteps + 1):
        while seg + 1 < seg_start.shape[0] and seg_start[seg + 1] <= k:
            seg += 1
        pp = plant_P[seg]
        same = True
        for j in range(pp.shape[0]):
            if pp[j] != cp[j]:
                same = False
        t = k * dt
        ok = _closed_loop(kind, pp, cp, same, law, KP, KD, KI, b, l, k_obs, L_obs, L_P, L_D,
                          r_off, r_amp, r_frq, r_phs, t, x, k1, tau, Hp, dHp, Gp, Hc, dHc, Gc)
        if not ok or not _finite(k1):
            return SOLVE_FAILED, k, n_rec
        if k % record_every == 0 or k == nsteps:
            X_rec[n_rec] = x
            tau_rec[n_rec] = tau
            n_rec += 1
        if k == nsteps:
            break
        for i in range(dim):
            xs[i] = x[i] + 0.5 * dt * k1[i]
        ok = _closed_loop(kind, pp, cp, same, law, KP, KD, KI, b, l, k_obs, L_obs, L_P, L_D,
                          r_off, r_amp, r_frq, r_phs, t + 0.5 * dt, xs, k2, tau_s,
                          Hp, dHp, Gp, Hc, dHc, Gc)
        for i in range(dim):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        ok = _closed_loop(kind, pp, cp, same, law, KP, KD, KI, b, l, k_obs, L_obs, L_P, L_D,
                          r_off, r_amp, r_frq, r_phs, t + 0.5 * dt, xs, k3, tau_s,
                          Hp, dHp, Gp, Hc, dHc, Gc) and ok
        for i in range(dim):
            xs[i] = x[i] + dt * k3[i]
        ok = _closed_loop(kind, pp, cp, same, law, KP, KD, KI, b, l, k_obs, L_obs, L_P, L_D,
                          r_off, r_amp, r_frq, r_phs, t + dt, xs, k4, tau_s,
                          Hp, dHp, Gp, Hc, dHc, Gc) and ok
        if not ok:
            return SOLVE_FAILED, k, n_rec
        for i in range(dim):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        norm = 0.0
        for i in range(2 * n):
            norm += x[i] * x[i]
        if not _finite(x) or not math.sqrt(norm) <= threshold:
            return DIVERGED, k + 1, n_rec
    return COMPLETED, nsteps, n_rec


# -- scenario / result ------------------------------------------------------


@dataclass(frozen=True)
class Disturbance:
    """Plant parameter jump: ``param += delta`` from time ``t`` onward."""

    t: float
    param: str
    delta: float


@dataclass(frozen=True)
class Scenario:
    model: RobotModel
    controller: str
    gains: Gains
    reference: SinusoidReference
    T: float
    dt: float = 1e-3
    q0: np.ndarray | None = None
    v0: np.ndarray | None = None
    controller_init: dict = field(default_factory=dict)
    disturbances: tuple[Disturbance, ...] = ()
    divergence_threshold: float = 1e3
    record_every: int = 1

    def validated(self) -> "Scenario":
        n = self.model.n
        if self.reference.n != n:
            raise InvalidInputError(f"reference has {self.reference.n} joints, model has {n}")
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if not self.T >= self.dt:
            raise InvalidInputError("T must be at least dt")
        if not self.divergence_threshold > 0:
            raise InvalidInputError("divergence_threshold must be positive")
        if int(self.record_every) < 1:
            raise InvalidInputError("record_every must be a positive integer")
        for d in self.disturbances:
            if not 0 <= d.t <= self.T:
                raise InvalidInputError(f"disturbance time {d.t} outside [0, T]")
            if d.param not in self.model.param_names():
                raise InvalidInputError(f"disturbance parameter {d.param!r} unknown")
        for name in ("q0", "v0"):
            value = getattr(self, name)
            if value is not None and np.shape(value) != (n,):
                raise InvalidInputError(f"{name} must have length {n}")
        self.gains.validated(self.controller, n)
        return self

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))

    def initial_state(self) -> np.ndarray:
        """Augmented initial state; filters start settled (zero output)."""
        n = self.model.n
        q0 = np.zeros(n) if self.q0 is None else np.asarray(self.q0, float)
        v0 = np.zeros(n) if self.v0 is None else np.asarray(self.v0, float)
        qd0 = self.reference(0.0)[0]
        init = dict(self.controller_init)
        unknown = set(init) - set(ctl.STATE_LAYOUT[self.controller])
        if unknown:
            raise InvalidInputError(
                f"{self.controller} has no internal state {sorted(unknown)}; "
                f"expected {ctl.STATE_LAYOUT[self.controller]}")
        g = self.gains
        defaults = {
            "q_hat": q0, "v_hat": np.zeros(n), "nu": np.zeros(n),
            "e_hat": q0 - qd0, "w": np.zeros(n),
        }
        if self.controller in ("R2", "R3"):
            defaults["z"] = q0 / np.asarray(g.l, float)
        elif self.controller == "T2":
            defaults["z"] = (q0 - qd0) / np.asarray(g.l, float)
        blocks = []
        for name in ctl.STATE_LAYOUT[self.controller]:
            value = np.asarray(init.get(name, defaults[name]), float)
            if value.shape != (n,):
                raise InvalidInputError(f"initial {name} must have length {n}")
            blocks.append(value)
        return np.concatenate([q0, v0, *blocks])


@dataclass
class SimResult:
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    q_d: np.ndarray
    internals: dict[str, np.ndarray]
    status: str
    diverged_at: float | None
    events: list[tuple[float, str, float]]
    dt: float
    controller: str

    @property
    def error(self) -> np.ndarray:
        return self.q - self.q_d

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask of samples with t0 <= t <= t1."""
        return (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)


def _gain_arrays(scenario: Scenario):
    n = scenario.model.n
    g = scenario.gains
    mat = lambda x: np.ascontiguousarray(np.eye(n) if x is None else np.asarray(x, float))  # noqa: E731
    vec = lambda x: np.ascontiguousarray(np.ones(n) if x is None else np.asarray(x, float))  # noqa: E731
    return (mat(g.K_P), mat(g.K_D), mat(g.K_I), vec(g.b), vec(g.l),
            float(g.k_D_obs or 1.0), mat(g.L_obs), mat(g.L_P), mat(g.L_D))


def run_scenario(scenario: Scenario) -> SimResult:
    """Integrate the closed loop from 0 to T.

    Divergence (state norm above the threshold, NaN, or a failed inertia
    solve) ends the run early with status ``diverged``; the samples up to
    that point are kept.
    """
    sc = scenario.validated()
    n = sc.model.n
    nsteps = sc.nsteps
    dt = float(sc.dt)
    every = int(sc.record_every)

    model = sc.model
    plant = [model.param_vector]
    starts = [0]
    events = []
    for d in sorted(sc.disturbances, key=lambda d: d.t):
        step = int(math.ceil(d.t / dt - 1e-9))
        model = model.perturbed(d.param, d.delta)
        plant.append(model.param_vector)
        starts.append(step)
        events.append((step * dt, d.param, d.delta))

    x0 = sc.initial_state()
    n_rec = nsteps // every + 1 + (1 if nsteps % every else 0)
    X = np.empty((n_rec, x0.size))
    TAU = np.empty((n_rec, n))
    ref = sc.reference
    status, step, got = _integrate(
        model.kind, np.ascontiguousarray(np.stack(plant)), np.asarray(starts, np.int64),
        sc.model.param_vector, ctl.CODE[sc.controller], *_gain_arrays(sc),
        ref.offset, ref.amplitude, ref.frequency, ref.phase,
        x0, dt, nsteps, every, float(sc.divergence_threshold), X, TAU)

    X, TAU = X[:got], TAU[:got]
    steps = np.arange(0, nsteps + 1, every)
    if steps[-1] != nsteps:
        steps = np.append(steps, nsteps)
    t = steps[:got] * dt
    internals = {}
    for i, name in enumerate(ctl.STATE_LAYOUT[sc.controller]):
        internals[name] = X[:, 2 * n + i * n: 2 * n + (i + 1) * n]
    if sc.controller in ("R2", "R3", "T2"):
        u = X[:, :n] - (ref(t)[0] if sc.controller == "T2" else 0.0)
        internals["theta"] = np.asarray(sc.gains.b) * (u - np.asarray(sc.gains.l) * internals["z"])
    diverged = status != COMPLETED
    return SimResult(
        t=t, q=X[:, :n], v=X[:, n:2 * n], tau=TAU, q_d=ref(t)[0], internals=internals,
        status="diverged" if diverged else "completed",
        diverged_at=step * dt if diverged else None,
        events=[e for e in events if e[0] <= (step * dt)], dt=dt, controller=sc.controller,
    )


# -- metrics ----------------------------------------------------------------


def control_energy(result: SimResult) -> float:
    """Integral of ||tau||^2 over the stored series (composite trapezoid)."""
    if len(result.t) < 2:
        raise InvalidInputError("need at least two samples to integrate control energy")
    return float(np.trapezoid(np.sum(result.tau**2, axis=1), result.t))


@dataclass(frozen=True)
class Metrics:
    available: bool
    E_tau: float
    overshoot: np.ndarray
    settling_time: np.ndarray
    steady_state_error: np.ndarray
    oscillation_amplitude: np.ndarray

    def as_dict(self) -> dict[str, float]:
        out = {"available": self.available, "E_tau": self.E_tau}
        for key in ("overshoot", "settling_time", "steady_state_error", "oscillation_amplitude"):
            for i, value in enumerate(getattr(self, key), start=1):
                out[f"{key}_{i}"] = float(value)
        return out


def error_metrics(t: np.ndarray, err: np.ndarray, band: float = 0.02, tail: float = 0.1):
    """Overshoot (%), settling time, tail mean and tail peak-to-peak per column."""
    err = np.atleast_2d(np.asarray(err, float).T).T
    tail_mask = t >= t[-1] - tail * (t[-1] - t[0]) - 1e-12
    final = err[tail_mask].mean(axis=0)
    amplitude = err[tail_mask].max(axis=0) - err[tail_mask].min(axis=0)
    span = err[0] - final
    overshoot = np.zeros(err.shape[1])
    settling = np.zeros(err.shape[1])
    for j in range(err.shape[1]):
        if span[j] == 0:
            continue
        # excursion past the last sample, so a monotone decay scores exactly zero
        past = -np.sign(span[j]) * (err[:, j] - err[-1, j])
        peak = float(past.max())
        overshoot[j] = 100 * peak / abs(span[j]) if peak > 0 else 0.0
        outside = np.nonzero(np.abs(err[:, j] - final[j]) > band * abs(span[j]))[0]
        if len(outside):
            k = min(outside[-1] + 1, len(t) - 1)
            settling[j] = t[k] - t[0]
    return overshoot, settling, final, amplitude


def response_metrics(result: SimResult) -> Metrics:
    energy = control_energy(result) if len(result.t) > 1 else float("nan")
    n = result.q.shape[1]
    if not result.completed:
        nan = np.full(n, np.nan)
        return Metrics(False, energy, nan, nan, nan, nan)
    return Metrics(True, energy, *error_metrics(result.t, result.error))


def r2_lyapunov(result: SimResult, model: RobotModel, gains: Gains) -> np.ndarray:
    """V = 1/2 q'H q' + 1/2 e'K_P e + 1/2 theta'K_D B^-1 theta along an R2 run."""
    if result.controller != "R2":
        raise InvalidInputError("the energy function applies to R2 runs")
    H = dynamics.inertia(model, result.q)
    kin = 0.5 * np.einsum("ti,tij,tj->t", result.v, H, result.v)
    err = result.error
    pot = 0.5 * np.einsum("ti,ij,tj->t", err, np.asarray(gains.K_P), err)
    theta = result.internals["theta"]
    W = np.asarray(gains.K_D) / np.asarray(gains.b)[None, :]
    filt = 0.5 * np.einsum("ti,ij,tj->t", theta, W, theta)
    return kin + pot + filt


# -- serialization ----------------------------------------------------------


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def timeseries_columns(result: SimResult) -> tuple[list[str], np.ndarray]:
    n = result.q.shape[1]
    names = ["t"]
    blocks = [result.t[:, None]]
    for prefix, data in (("q", result.q), ("qd", result.q_d), ("tau", result.tau),
                         ("err", result.error)):
        names += [f"{prefix}{i}" for i in range(1, n + 1)]
        blocks.append(data)
    for key, data in result.internals.items():
        names += [f"{key}{i}" for i in range(1, n + 1)]
        blocks.append(data)
    names += [f"dq{i}" for i in range(1, n + 1)]
    blocks.append(result.v)
    return names, np.hstack(blocks)


def write_timeseries(result: SimResult, path: str) -> None:
    names, data = timeseries_columns(result)
    buf = io.StringIO()
    np.savetxt(buf, data, delimiter=",", fmt="%.17g", header=",".join(names), comments="")
    atomic_write(path, buf.getvalue())


def summary_dict(result: SimResult) -> dict:
    m = response_metrics(result)
    out = {"controller": result.controller, "status": result.status,
           "diverged_at": "" if result.diverged_at is None else result.diverged_at,
           "T_end": float(result.t[-1]) if len(result.t) else 0.0, "dt": result.dt}
    out.update(m.as_dict())
    final = result.error[-1] if len(result.t) else []
    for i, value in enumerate(final, start=1):
        out[f"final_error_{i}"] = float(value)
    for k, (t, name, delta) in enumerate(result.events, start=1):
        out[f"disturbance_{k}"] = f"t={t:g} {name}+={delta:g}"
    return out


def write_summary(result: SimResult, path: str) -> None:
    lines = [f"{k} = {v}" for k, v in summary_dict(result).items()]
    atomic_write(path, "\n".join(lines) + "\n")
