"""Desired joint motions and the bound constants tracking gain checks need."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class SinusoidReference:
    """q_d,i(t) = offset_i + amplitude_i * sin(frequency_i * t + phase_i).

    A set-point is the special case of zero amplitudes.
    """

    offset: np.ndarray
    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(getattr(self, k), dtype=float))
                  for k in ("offset", "amplitude", "frequency", "phase")]
        n = len(arrays[0])
        for name, arr in zip(("offset", "amplitude", "frequency", "phase"), arrays):
            if arr.shape != (n,):
                raise InvalidInputError(f"reference {name} must have length {n}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"reference {name} has non-finite entries")
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return len(self.offset)

    @property
    def is_setpoint(self) -> bool:
        return bool(np.all((self.amplitude == 0) | (self.frequency == 0)))

    def __call__(self, t):
        """Return (q_d, q_d', q_d'') with shape (n,) for scalar t, else (len(t), n)."""
        t = np.asarray(t, dtype=float)
        arg = np.multiply.outer(t, self.frequency) + self.phase
        s, c = np.sin(arg), np.cos(arg)
        pos = self.offset + self.amplitude * s
        vel = self.amplitude * self.frequency * c
        acc = -self.amplitude * self.frequency**2 * s
        return pos, vel, acc

    def scaled(self, factor: float) -> "SinusoidReference":
        return SinusoidReference(factor * self.offset, factor * self.amplitude,
                                 self.frequency, self.phase)

    def period(self) -> float | None:
        """Common period when all active frequencies are rational multiples."""
        active = [f for f, a in zip(self.frequency, self.amplitude) if a != 0 and f != 0]
        if not active:
            return None
        fr = [Fraction(abs(float(f))).limit_denominator(1000) for f in active]
        if any(abs(float(r) - abs(f)) > 1e-12 * abs(f) for r, f in zip(fr, active)):
            return None
        den = int(np.lcm.reduce([f.denominator for f in fr]))
        num = 0
        for f in fr:
            num = gcd(num, f.numerator * den // f.denominator)
        base = Fraction(num, den)
        return float(2 * np.pi / base)


def setpoint(q_d) -> SinusoidReference:
    q_d = np.atleast_1d(np.asarray(q_d, dtype=float))
    zeros = np.zeros_like(q_d)
    return SinusoidReference(q_d, zeros, zeros, zeros)


BENCHMARK_SETPOINT = (np.pi / 4, np.pi / 2, -2 * np.pi / 3)


def benchmark_setpoint() -> SinusoidReference:
    return setpoint(BENCHMARK_SETPOINT)


def benchmark_sinusoid() -> SinusoidReference:
    """pi/4 sin t + pi/2, pi/6 sin(2t + pi/4), pi/6 cos t."""
    pi = np.pi
    return SinusoidReference(
        offset=[pi / 2, 0.0, 0.0],
        amplitude=[pi / 4, pi / 6, pi / 6],
        frequency=[1.0, 2.0, 1.0],
        phase=[0.0, pi / 4, pi / 2],
    )


# interface names kept for existing configs and callers
paper_setpoint = benchmark_setpoint
paper_sinusoid = benchmark_sinusoid

BUILTIN = {"benchmark_setpoint": benchmark_setpoint, "benchmark_sinusoid": benchmark_sinusoid,
           "paper_setpoint": benchmark_setpoint, "paper_sinusoid": benchmark_sinusoid}


@dataclass(frozen=True)
class RefBounds:
    """Sampled suprema and component-wise analytic envelopes.

    ``k_q``/``k_delta`` are sampled sups of ||q_d'|| and of the largest of
    the three derivative-order norms.  The ``*_envelope`` fields bound each
    component by its own peak and combine them as a Euclidean norm; gain
    checks consume the envelopes.
    """

    k_q: float
    k_delta: float
    k_q_envelope: float
    k_delta_envelope: float
    sup_position: float
    sup_velocity: float
    sup_acceleration: float


def ref_bounds(ref: SinusoidReference, samples: int = 20000,
               horizon: float | None = None) -> RefBounds:
    if ref.is_setpoint:
        norm = float(np.linalg.norm(ref.offset))
        return RefBounds(0.0, norm, 0.0, norm, norm, 0.0, 0.0)
    if samples < 2:
        raise InvalidInputError("need at least two samples")
    span = horizon if horizon is not None else ref.period()
    if span is None:
        raise InvalidInputError("reference has no common period; pass a horizon")
    t = np.linspace(0.0, span, samples)
    pos, vel, acc = ref(t)
    sups = [float(np.linalg.norm(x, axis=1).max()) for x in (pos, vel, acc)]
    a, w = np.abs(ref.amplitude), np.abs(ref.frequency)
    env = [float(np.linalg.norm(np.abs(ref.offset) + a)),
           float(np.linalg.norm(a * w)),
           float(np.linalg.norm(a * w**2))]
    return RefBounds(sups[1], max(sups), env[1], max(env), *sups)
