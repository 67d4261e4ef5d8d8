"""Mountain Car and Acrobot following the canonical classic-control formulations.

Mountain Car (Moore): actions {0: push left, 1: coast, 2: push right};
  v ← clip(v + (a − 1)·0.001 − 0.0025·cos(3p), ±0.07); p ← clip(p + v, [−1.2, 0.6]);
  velocity zeroed at the left wall; done when p ≥ 0.5; reward −1 per step.

Acrobot (Sutton, book dynamics): state (θ1, θ2, θ̇1, θ̇2), torques {−1, 0, +1},
  dt = 0.2 with Euler integration (RK4 optional); angles wrapped to [−π, π],
  velocities clipped to ±4π / ±9π; done when −cos θ1 − cos(θ1 + θ2) > 1;
  reward −1 per non-terminal step, 0 on the terminal step.
"""
from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from backend.environments.base import EnvSpec, Environment

# ---------- Mountain Car ----------

MC_MIN_POS, MC_MAX_POS = -1.2, 0.6
MC_MAX_SPEED = 0.07
MC_GOAL_POS = 0.5
MC_FORCE = 0.001
MC_GRAVITY = 0.0025

MOUNTAIN_CAR_SPEC = EnvSpec(
    name="mountain_car",
    state_dim=2,
    action_count=3,
    state_bounds=((MC_MIN_POS, MC_MAX_POS), (-MC_MAX_SPEED, MC_MAX_SPEED)),
    max_episode_steps=500,
    random_return=-500.0,
    best_return=-110.0,
)


def mountain_car_step(state, action: int) -> Tuple[np.ndarray, float, bool]:
    if not 0 <= int(action) < 3:
        raise ValueError(f"invalid mountain car action {action!r}")
    position, velocity = float(state[0]), float(state[1])
    velocity += (int(action) - 1) * MC_FORCE + math.cos(3 * position) * (-MC_GRAVITY)
    velocity = min(max(velocity, -MC_MAX_SPEED), MC_MAX_SPEED)
    position += velocity
    position = min(max(position, MC_MIN_POS), MC_MAX_POS)
    if position == MC_MIN_POS and velocity < 0:
        velocity = 0.0
    done = position >= MC_GOAL_POS
    return np.array([position, velocity]), -1.0, done


class MountainCar(Environment):
    spec = MOUNTAIN_CAR_SPEC

    def initial_state(self) -> np.ndarray:
        return np.array([self.rng.uniform(-0.6, -0.4), 0.0])

    def transition(self, state, action, rng):
        return mountain_car_step(state, action)

    def is_terminal(self, state) -> bool:
        return float(state[0]) >= MC_GOAL_POS


# ---------- Acrobot ----------

AC_DT = 0.2
AC_LINK_LENGTH_1 = 1.0
AC_LINK_MASS_1 = 1.0
AC_LINK_MASS_2 = 1.0
AC_LINK_COM_POS_1 = 0.5
AC_LINK_COM_POS_2 = 0.5
AC_LINK_MOI = 1.0
AC_MAX_VEL_1 = 4 * math.pi
AC_MAX_VEL_2 = 9 * math.pi
AC_TORQUES = (-1.0, 0.0, 1.0)
AC_GRAVITY = 9.8

ACROBOT_SPEC = EnvSpec(
    name="acrobot",
    state_dim=4,
    action_count=3,
    state_bounds=((-math.pi, math.pi), (-math.pi, math.pi), (-AC_MAX_VEL_1, AC_MAX_VEL_1), (-AC_MAX_VEL_2, AC_MAX_VEL_2)),
    max_episode_steps=500,
    random_return=-500.0,
    best_return=-60.0,
)


def _wrap(angle: float) -> float:
    return ((angle + math.pi) % (2 * math.pi)) - math.pi


def _acrobot_derivs(s: np.ndarray, torque: float) -> np.ndarray:
    m1, m2 = AC_LINK_MASS_1, AC_LINK_MASS_2
    l1 = AC_LINK_LENGTH_1
    lc1, lc2 = AC_LINK_COM_POS_1, AC_LINK_COM_POS_2
    I1 = I2 = AC_LINK_MOI
    g = AC_GRAVITY
    theta1, theta2, dtheta1, dtheta2 = s
    d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * math.cos(theta2)) + I1 + I2
    d2 = m2 * (lc2 ** 2 + l1 * lc2 * math.cos(theta2)) + I2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (-m2 * l1 * lc2 * dtheta2 ** 2 * math.sin(theta2)
            - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2) + phi2)
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 ** 2 * math.sin(theta2) - phi2) / (
        m2 * lc2 ** 2 + I2 - d2 ** 2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2])


def acrobot_step(state, action: int, integrator: str = "euler") -> Tuple[np.ndarray, float, bool]:
    if not 0 <= int(action) < len(AC_TORQUES):
        raise ValueError(f"invalid acrobot action {action!r}")
    torque = AC_TORQUES[int(action)]
    s = np.asarray(state, dtype=float)
    if integrator == "rk4":
        k1 = _acrobot_derivs(s, torque)
        k2 = _acrobot_derivs(s + AC_DT / 2 * k1, torque)
        k3 = _acrobot_derivs(s + AC_DT / 2 * k2, torque)
        k4 = _acrobot_derivs(s + AC_DT * k3, torque)
        ns = s + AC_DT / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    elif integrator == "euler":
        ns = s + AC_DT * _acrobot_derivs(s, torque)
    else:
        raise ValueError(f"unknown integrator '{integrator}'")
    ns = np.array([
        _wrap(ns[0]),
        _wrap(ns[1]),
        min(max(ns[2], -AC_MAX_VEL_1), AC_MAX_VEL_1),
        min(max(ns[3], -AC_MAX_VEL_2), AC_MAX_VEL_2),
    ])
    done = acrobot_terminal(ns)
    return ns, (0.0 if done else -1.0), done


def acrobot_terminal(state) -> bool:
    return bool(-math.cos(state[0]) - math.cos(state[1] + state[0]) > 1.0)


class Acrobot(Environment):
    spec = ACROBOT_SPEC

    def __init__(self, seed: int = 0, integrator: str = "euler"):
        super().__init__(seed)
        if integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator '{integrator}'")
        self.integrator = integrator

    def initial_state(self) -> np.ndarray:
        return self.rng.uniform(-0.1, 0.1, size=4)

    def transition(self, state, action, rng):
        return acrobot_step(state, action, self.integrator)

    def is_terminal(self, state) -> bool:
        return acrobot_terminal(state)


__all__ = [
    "MountainCar",
    "Acrobot",
    "MOUNTAIN_CAR_SPEC",
    "ACROBOT_SPEC",
    "mountain_car_step",
    "acrobot_step",
    "acrobot_terminal",
]
