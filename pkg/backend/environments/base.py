"""Environment contract shared by Gridworld, Mountain Car and Acrobot.

Every environment owns its RNG (seeded at construction), exposes a pure
noise-free `dynamics` map for ground-truth model evaluation, and a
`is_terminal` test used to label synthetic transitions.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class EnvSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    state_dim: int = Field(gt=0)
    action_count: int = Field(gt=0)
    state_bounds: Tuple[Tuple[float, float], ...]
    max_episode_steps: int = Field(gt=0)
    # normalized return = (return - random_return) / (best_return - random_return)
    random_return: float = 0.0
    best_return: float = 1.0

    @model_validator(mode="after")
    def _check_bounds(self) -> "EnvSpec":
        if len(self.state_bounds) != self.state_dim:
            raise ValueError(f"state_bounds has {len(self.state_bounds)} entries, expected {self.state_dim}")
        for lo, hi in self.state_bounds:
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise ValueError(f"invalid state bound ({lo}, {hi})")
        if self.best_return == self.random_return:
            raise ValueError("best_return must differ from random_return")
        return self

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.state_bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.state_bounds], dtype=float)

    def clip_state(self, state: np.ndarray) -> np.ndarray:
        return np.clip(state, self.lower, self.upper)

    def normalize_return(self, episode_return: float) -> float:
        return (episode_return - self.random_return) / (self.best_return - self.random_return)


class StepResult(NamedTuple):
    state: np.ndarray
    reward: float
    done: bool
    truncated: bool


class Environment(ABC):
    """Single-threaded, seeded environment with an episode step cap."""

    spec: EnvSpec

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.state: Optional[np.ndarray] = None
        self.elapsed = 0

    @abstractmethod
    def initial_state(self) -> np.ndarray:
        ...

    @abstractmethod
    def transition(self, state: np.ndarray, action: int, rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, float, bool]:
        """One step; rng=None gives the noise-free map."""

    @abstractmethod
    def is_terminal(self, state: np.ndarray) -> bool:
        ...

    def check_action(self, action: int) -> int:
        if not isinstance(action, (int, np.integer)) or not 0 <= int(action) < self.spec.action_count:
            raise ValueError(f"invalid action {action!r} for {self.spec.name} ({self.spec.action_count} actions)")
        return int(action)

    def reset(self) -> np.ndarray:
        self.state = self.initial_state()
        self.elapsed = 0
        return self.state.copy()

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        next_state, reward, done = self.transition(self.state, self.check_action(action), self.rng)
        self.state = next_state
        self.elapsed += 1
        truncated = not done and self.elapsed >= self.spec.max_episode_steps
        return StepResult(next_state.copy(), reward, done, truncated)

    def dynamics(self, state: np.ndarray, action: int) -> Tuple[np.ndarray, float, bool]:
        return self.transition(np.asarray(state, dtype=float), self.check_action(action), None)

    def state_grid(self, resolution: int) -> np.ndarray:
        """Cell-centered grid states over the state bounds, shape (resolution**dim, dim)."""
        axes = [lo + (np.arange(resolution) + 0.5) * (hi - lo) / resolution for lo, hi in self.spec.state_bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def is_valid_state(self, state: np.ndarray) -> bool:
        return True


def one_hot(action: int, action_count: int) -> np.ndarray:
    vec = np.zeros(action_count)
    vec[int(action)] = 1.0
    return vec


def grid_cell_index(states: np.ndarray, spec: EnvSpec, resolution: int) -> np.ndarray:
    """Flat state-grid cell index for each row of `states` (matches state_grid ordering)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    frac = (states - spec.lower) / (spec.upper - spec.lower)
    cells = np.clip(np.floor(frac * resolution).astype(np.int64), 0, resolution - 1)
    strides = np.array([resolution ** (spec.state_dim - 1 - j) for j in range(spec.state_dim)], dtype=np.int64)
    return cells @ strides


__all__ = ["EnvSpec", "StepResult", "Environment", "one_hot", "grid_cell_index"]
