"""Catalog of the benchmark set-ups on the three-joint haptic arm.

Each builder returns a :class:`Scenario` with the step size and divergence
threshold the set-up needs. The arm's inertia is small (a few 1e-3 kg m^2),
so the high-gain laws are stiff and need steps well below 1 ms.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .controllers import Gains
from .dynamics import Phantom3
from .references import benchmark_setpoint, benchmark_sinusoid
from .simulation import Disturbance, Scenario

DISTANT_OBSERVER_INIT = {
    "q_hat": np.array([np.pi / 2, -np.pi / 3, 0.0]),
    "v_hat": np.array([-2.0, 0.5, 1.0]),
}

# load added to link A: 1 kg for regulation, a lighter grab for tracking
REGULATION_LOAD = 1.0
TRACKING_LOAD = 0.1


def observer_regulation(k_D_obs=900.0, alpha_P=5.0, alpha_D=5.0, alpha_L=3.0,
                        T=20.0, dt=1e-4, threshold=1e3, model=None, **kw) -> Scenario:
    gains = Gains.from_scalars("R1", 3, alpha_P=alpha_P, alpha_D=alpha_D,
                               alpha_L=alpha_L, k_D_obs=k_D_obs)
    return Scenario(model or Phantom3(), "R1", gains, benchmark_setpoint(), T=T, dt=dt,
                    controller_init=dict(DISTANT_OBSERVER_INIT),
                    divergence_threshold=threshold, **kw)


def filtered_regulation(alpha_P=10.0, alpha_D=10.0, alpha_L=100.0, b=5.0,
                        T=30.0, dt=1e-3, model=None, **kw) -> Scenario:
    gains = Gains.from_scalars("R2", 3, alpha_P=alpha_P, alpha_D=alpha_D,
                               alpha_L=alpha_L, b=b)
    return Scenario(model or Phantom3(), "R2", gains, benchmark_setpoint(), T=T, dt=dt, **kw)


def pid_regulation(alpha_P=10.0, alpha_D=10.0, alpha_I=10.0, alpha_L=100.0, b=50.0,
                   T=30.0, dt=1e-4, model=None, **kw) -> Scenario:
    gains = Gains.from_scalars("R3", 3, alpha_P=alpha_P, alpha_D=alpha_D,
                               alpha_I=alpha_I, alpha_L=alpha_L, b=b)
    return Scenario(model or Phantom3(), "R3", gains, benchmark_setpoint(), T=T, dt=dt, **kw)


def observer_tracking(alpha_P=10.0, alpha_D=10.0, alpha_L=3.0, k_D_obs=1e4,
                      T=20.0, dt=5e-5, model=None, **kw) -> Scenario:
    gains = Gains.from_scalars("T1", 3, alpha_P=alpha_P, alpha_D=alpha_D,
                               alpha_L=alpha_L, k_D_obs=k_D_obs)
    return Scenario(model or Phantom3(), "T1", gains, benchmark_sinusoid(), T=T, dt=dt, **kw)


def filtered_tracking(alpha_P=50.0, alpha_D=5.0, alpha_L=500.0, b=50.0,
                      T=20.0, dt=1e-4, model=None, **kw) -> Scenario:
    gains = Gains.from_scalars("T2", 3, alpha_P=alpha_P, alpha_D=alpha_D,
                               alpha_L=alpha_L, b=b)
    return Scenario(model or Phantom3(), "T2", gains, benchmark_sinusoid(), T=T, dt=dt, **kw)


def linear_tracking(gain=100.0, T=20.0, dt=None, model=None, **kw) -> Scenario:
    """All four gains equal; the step shrinks with the gain."""
    gains = Gains.from_scalars("T3", 3, alpha_P=gain, alpha_D=gain,
                               alpha_LP=gain, alpha_LD=gain)
    if dt is None:
        dt = 1e-4 * min(1.0, 100.0 / gain)
    return Scenario(model or Phantom3(), "T3", gains, benchmark_sinusoid(), T=T, dt=dt, **kw)


def with_load(scenario: Scenario, t: float, mass: float) -> Scenario:
    """Copy of ``scenario`` whose plant picks up ``mass`` on link A at ``t``."""
    return replace(scenario, disturbances=scenario.disturbances + (Disturbance(t, "m_a", mass),))


BUILDERS = {
    "R1": observer_regulation,
    "R2": filtered_regulation,
    "R3": pid_regulation,
    "T1": observer_tracking,
    "T2": filtered_tracking,
    "T3": linear_tracking,
}
