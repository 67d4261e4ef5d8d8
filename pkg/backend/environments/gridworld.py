"""Continuous Gridworld with a vertical barrier.

Geometry (unit square):
  - start region: bottom-left, uniform in [0.05, 0.15]^2
  - goal G = (0.9, 0.9); reaching within 0.05 of G gives reward 1 and ends the episode
  - barrier: thin wall x ∈ [0.49, 0.51], y ∈ [0, 0.7], leaving a gap at the top
  - each action moves 0.05 along its axis, plus a uniform offset in [-0.01, 0.01]
    per coordinate so visited states are continuous

Movement is resolved axis by axis (x then y) and truncated at the wall surface,
so a state is never strictly inside the barrier.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from backend.environments.base import EnvSpec, Environment

STEP_SIZE = 0.05
NOISE_HALF_WIDTH = 0.01
GOAL = np.array([0.9, 0.9])
GOAL_RADIUS = 0.05
WALL_X = (0.49, 0.51)
WALL_TOP = 0.7

# up, down, right, left
ACTIONS = np.array([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]])

GRIDWORLD_SPEC = EnvSpec(
    name="gridworld",
    state_dim=2,
    action_count=4,
    state_bounds=((0.0, 1.0), (0.0, 1.0)),
    max_episode_steps=500,
    random_return=0.0,
    best_return=1.0,
)


def inside_barrier(state: np.ndarray) -> bool:
    x, y = state
    return WALL_X[0] < x < WALL_X[1] and y < WALL_TOP


def _move_x(x: float, y: float, dx: float) -> float:
    nx = x + dx
    if y < WALL_TOP:
        if x <= WALL_X[0] < nx:
            return WALL_X[0]
        if x >= WALL_X[1] > nx:
            return WALL_X[1]
    return nx


def _move_y(x: float, y: float, dy: float) -> float:
    ny = y + dy
    if WALL_X[0] < x < WALL_X[1] and y >= WALL_TOP > ny:
        return WALL_TOP
    return ny


def reached_goal(state: np.ndarray) -> bool:
    return float(np.linalg.norm(np.asarray(state) - GOAL)) < GOAL_RADIUS


def gridworld_step(state, action: int, rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, float, bool]:
    """Pure Gridworld kinematics; rng=None disables the random offset."""
    state = np.asarray(state, dtype=float)
    if state.shape != (2,) or np.any(state < 0.0) or np.any(state > 1.0):
        raise ValueError(f"gridworld state must lie in the unit square, got {state}")
    if not 0 <= int(action) < len(ACTIONS):
        raise ValueError(f"invalid gridworld action {action!r}")
    delta = STEP_SIZE * ACTIONS[int(action)]
    if rng is not None:
        delta = delta + rng.uniform(-NOISE_HALF_WIDTH, NOISE_HALF_WIDTH, size=2)
    x, y = float(state[0]), float(state[1])
    x = min(max(_move_x(x, y, float(delta[0])), 0.0), 1.0)
    y = min(max(_move_y(x, y, float(delta[1])), 0.0), 1.0)
    nxt = np.array([x, y])
    if reached_goal(nxt):
        return nxt, 1.0, True
    return nxt, 0.0, False


class Gridworld(Environment):
    spec = GRIDWORLD_SPEC

    def initial_state(self) -> np.ndarray:
        return self.rng.uniform(0.05, 0.15, size=2)

    def transition(self, state, action, rng):
        return gridworld_step(state, action, rng)

    def is_terminal(self, state) -> bool:
        return reached_goal(state)

    def is_valid_state(self, state) -> bool:
        return not inside_barrier(np.asarray(state, dtype=float))


__all__ = ["Gridworld", "GRIDWORLD_SPEC", "gridworld_step", "inside_barrier", "reached_goal", "GOAL"]
