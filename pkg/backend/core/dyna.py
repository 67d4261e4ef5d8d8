"""Dyna MBRL loop with an online FTL world model.

Per epoch:
  1. K environment interactions. The agent acts epsilon-greedily, learns
     directly from real transitions every `real_update_interval` steps, and
     every transition is buffered for the model, which consumes the buffer
     every `model_update_interval` steps (each transition observed exactly once).
  2. N planning steps: sample a visited state uniformly (search control),
     unroll the model k steps on-policy, push synthetic transitions to D_m.
     A rollout cut short by a non-finite prediction keeps its finite prefix.
  3. G learning steps: one mean Q-update per mini-batch drawn from D_m.

The loop yields one MetricsRecord per finished episode. With N = G = 0 the
agent's trajectory is identical to the model-free agent under the same seed:
environment, agent and planning randomness use separate streams.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from backend.core.agent import QAgent
from backend.core.world_model import SyntheticTransition, Transition, TransitionBatch, WorldModel
from backend.environments.base import Environment, one_hot, grid_cell_index

logger = logging.getLogger(__name__)


class DynaConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=500, gt=0)
    interactions_per_epoch: int = Field(default=100, gt=0)
    planning_steps: int = Field(default=100, ge=0)
    learning_steps: Optional[int] = Field(default=None, ge=0)
    unroll_length: int = Field(default=1, gt=0)
    model_update_interval: int = Field(default=25, ge=1)
    real_update_interval: int = Field(default=4, ge=1)
    planning_batch: int = Field(default=32, gt=0)
    planning_per_real: int = Field(default=16, gt=0)
    model_buffer_capacity: int = Field(default=100_000, gt=0)
    error_threshold: float = Field(default=0.05, ge=0.0)
    error_eval_every: int = Field(default=50, ge=0)
    grid_resolution: int = Field(default=20, gt=0)
    seed: int = 0

    @property
    def effective_learning_steps(self) -> int:
        """G; when unset, `planning_per_real` batch updates per real-data update."""
        if self.learning_steps is not None:
            return self.learning_steps
        return self.planning_per_real * (self.interactions_per_epoch // self.real_update_interval)

    @property
    def total_interactions(self) -> int:
        return self.epochs * self.interactions_per_epoch


class ModelBuffer:
    """FIFO ring buffer D_m of synthetic transitions plus the visited-state log.

    Transitions are stored column-wise in preallocated arrays sized on the
    first push; `sample` returns a TransitionBatch ready for a batch Q-update.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.visited: List[np.ndarray] = []
        self._columns: Optional[TransitionBatch] = None
        self._size = 0
        self._next = 0

    def __len__(self) -> int:
        return self._size

    def _allocate(self, state_dim: int) -> None:
        cap = self.capacity
        self._columns = TransitionBatch(
            s=np.zeros((cap, state_dim)),
            a=np.zeros(cap, dtype=np.int64),
            r=np.zeros(cap),
            s_next=np.zeros((cap, state_dim)),
            done=np.zeros(cap, dtype=bool),
        )

    def push(self, transitions: Sequence[SyntheticTransition]) -> None:
        transitions = list(transitions)
        if not transitions:
            return
        batch = TransitionBatch.from_transitions(transitions[-self.capacity:])
        if self._columns is None:
            self._allocate(batch.s.shape[1])
        n = batch.r.shape[0]
        slots = (self._next + np.arange(n)) % self.capacity
        for store, column in zip(self._columns, batch):
            store[slots] = column
        self._next = (self._next + n) % self.capacity
        self._size = min(self._size + n, self.capacity)

    @property
    def transitions(self) -> TransitionBatch:
        """Stored transitions, oldest first."""
        if self._columns is None:
            return TransitionBatch(np.zeros((0, 0)), np.zeros(0, dtype=np.int64), np.zeros(0),
                                   np.zeros((0, 0)), np.zeros(0, dtype=bool))
        order = (self._next - self._size + np.arange(self._size)) % self.capacity
        return TransitionBatch(*(column[order] for column in self._columns))

    def log_state(self, state: np.ndarray) -> None:
        self.visited.append(np.array(state, dtype=float))

    def sample_visited(self, rng: np.random.Generator) -> np.ndarray:
        return self.visited[int(rng.integers(len(self.visited)))]

    def sample(self, batch: int, rng: np.random.Generator) -> TransitionBatch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty model buffer")
        # occupied slots are always 0.._size-1 of the ring
        idx = rng.integers(self._size, size=batch)
        return TransitionBatch(*(column[idx] for column in self._columns))


@dataclass
class ErrorMap:
    grid_states: np.ndarray
    errors: np.ndarray          # (n_grid, n_actions) Euclidean next-state error
    flags: np.ndarray           # errors > threshold
    threshold: float
    visited: Optional[np.ndarray] = None  # (n_grid,) grid cell contains a visited state

    @property
    def fraction_flagged(self) -> float:
        return float(self.flags.mean()) if self.flags.size else 0.0

    @property
    def fraction_flagged_visited(self) -> float:
        if self.visited is None or not self.visited.any():
            return self.fraction_flagged
        return float(self.flags[self.visited].mean())

    def to_csv(self, path: str) -> None:
        dim = self.grid_states.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow([f"s{j}" for j in range(dim)] + ["action", "error", "flagged", "visited"])
            for i, state in enumerate(self.grid_states):
                for a in range(self.errors.shape[1]):
                    writer.writerow([f"{v:.6f}" for v in state] + [a, f"{self.errors[i, a]:.8f}", int(self.flags[i, a]),
                                    int(self.visited[i]) if self.visited is not None else ""])


def evaluate_model_error(model: WorldModel, env: Environment, grid_states: np.ndarray,
                         threshold: float = 0.05, visited_states: Optional[Sequence[np.ndarray]] = None,
                         resolution: Optional[int] = None) -> ErrorMap:
    """Compare model one-step predictions with the noise-free environment map.

    `visited` marks grid cells (of a `resolution`-per-axis grid) containing at
    least one visited state.
    """
    grid_states = np.atleast_2d(np.asarray(grid_states, dtype=float))
    n_actions = env.spec.action_count
    errors = np.zeros((grid_states.shape[0], n_actions))
    for i, state in enumerate(grid_states):
        for a in range(n_actions):
            true_next, _, _ = env.dynamics(state, a)
            pred_next, _ = model.predict_next(state, a)
            errors[i, a] = float(np.linalg.norm(pred_next - true_next))
    visited = None
    if visited_states is not None and len(visited_states) and resolution is not None:
        grid_cells = grid_cell_index(grid_states, env.spec, resolution)
        visited_cells = np.unique(grid_cell_index(np.asarray(visited_states), env.spec, resolution))
        visited = np.isin(grid_cells, visited_cells)
    return ErrorMap(grid_states, errors, errors > threshold, threshold, visited)


@dataclass
class MetricsRecord:
    step: int
    episode: int
    episode_return: float
    normalized_return: float
    model_error_fraction: float
    update_wall_time: float


class DynaLoop:
    def __init__(self, env: Environment, agent: QAgent, model: Optional[WorldModel], cfg: DynaConfig,
                 learn_model: bool = True):
        if learn_model and model is None:
            raise ValueError("a world model is required when learn_model is on")
        if (cfg.planning_steps or cfg.effective_learning_steps) and model is None:
            raise ValueError("planning requires a world model")
        if model is not None and model.spec.state_dim != env.spec.state_dim:
            raise ValueError("world model and environment state dims differ")
        self.env = env
        self.agent = agent
        self.model = model
        self.cfg = cfg
        self.learn_model = learn_model
        self.buffer = ModelBuffer(cfg.model_buffer_capacity)
        self.plan_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        self.real_transitions = 0
        self.truncated_rollouts = 0
        self.latest_error_map: Optional[ErrorMap] = None
        self._pending: List[Transition] = []
        self._update_time = 0.0
        self._update_count = 0

    def _flush_model(self) -> None:
        if not self._pending:
            return
        start = time.perf_counter()
        for tr in self._pending:
            self.model.observe(tr)
        self._update_time += time.perf_counter() - start
        self._update_count += len(self._pending)
        self._pending.clear()

    def _take_wall_time(self) -> float:
        mean = self._update_time / self._update_count if self._update_count else 0.0
        self._update_time = 0.0
        self._update_count = 0
        return mean

    def _planning_action(self, s: np.ndarray) -> int:
        """Epsilon-greedy on the planning stream, leaving the agent's exploration stream untouched."""
        agent = self.agent
        if self.plan_rng.random() < agent.epsilon:
            return int(self.plan_rng.integers(agent.action_count))
        return agent.act(s, greedy=True)

    def _plan(self) -> None:
        k = self.cfg.unroll_length
        for _ in range(self.cfg.planning_steps):
            s0 = self.buffer.sample_visited(self.plan_rng)
            rollout = self.model.unroll(s0, self._planning_action, k, is_terminal=self.env.is_terminal)
            if len(rollout) < k and not (rollout and rollout[-1].done):
                self.truncated_rollouts += 1
            # a truncated rollout still contributes its finite prefix
            self.buffer.push(rollout)

    def _learn(self) -> None:
        if not len(self.buffer):
            return
        for _ in range(self.cfg.effective_learning_steps):
            self.agent.q_update_batch(self.buffer.sample(self.cfg.planning_batch, self.plan_rng))

    def evaluate_error_map(self) -> float:
        """Refresh `latest_error_map` on the state grid; returns the visited-region flagged fraction."""
        env = self.env
        grid_points = env.state_grid(self.cfg.grid_resolution)
        grid_points = grid_points[[env.is_valid_state(p) for p in grid_points]]
        self.latest_error_map = evaluate_model_error(self.model, env, grid_points, self.cfg.error_threshold,
                                                     self.buffer.visited, self.cfg.grid_resolution)
        return self.latest_error_map.fraction_flagged_visited

    def run(self) -> Iterator[MetricsRecord]:
        cfg = self.cfg
        env, agent = self.env, self.agent
        state = env.reset()
        episode, episode_return = 0, 0.0
        error_fraction = math.nan
        recent: List[SyntheticTransition] = []

        for epoch in range(cfg.epochs):
            for _ in range(cfg.interactions_per_epoch):
                action = agent.act(state)
                agent.tick()
                result = env.step(action)
                self.buffer.log_state(state)
                self.real_transitions += 1
                recent.append(SyntheticTransition(state, action, result.reward, result.state, result.done))
                if len(recent) >= cfg.real_update_interval:
                    agent.q_update_batch(recent)
                    recent = []
                if self.learn_model:
                    self._pending.append(Transition(state, one_hot(action, env.spec.action_count), result.reward, result.state))
                    if len(self._pending) >= cfg.model_update_interval:
                        self._flush_model()

                episode_return += result.reward
                state = result.state
                if result.done or result.truncated:
                    yield MetricsRecord(
                        step=self.real_transitions,
                        episode=episode,
                        episode_return=episode_return,
                        normalized_return=env.spec.normalize_return(episode_return),
                        model_error_fraction=error_fraction,
                        update_wall_time=self._take_wall_time(),
                    )
                    episode += 1
                    episode_return = 0.0
                    state = env.reset()

            if cfg.planning_steps and self.buffer.visited:
                self._plan()
            if cfg.effective_learning_steps:
                self._learn()
            if self.learn_model and cfg.error_eval_every and (epoch + 1) % cfg.error_eval_every == 0:
                error_fraction = self.evaluate_error_map()
                logger.debug(f"epoch {epoch + 1}: model error fraction {error_fraction:.4f}")

        if self.learn_model:
            self._flush_model()
            if self.model.transitions_observed != self.real_transitions:
                raise RuntimeError(f"model observed {self.model.transitions_observed} transitions, "
                                   f"environment produced {self.real_transitions}")
        if self.truncated_rollouts:
            logger.warning(f"Truncated {self.truncated_rollouts} model rollouts at a non-finite prediction; "
                           f"their finite prefixes were kept")


def run_dyna(env: Environment, agent: QAgent, model: Optional[WorldModel], cfg: DynaConfig,
             learn_model: bool = True) -> Iterator[MetricsRecord]:
    return DynaLoop(env, agent, model, cfg, learn_model=learn_model).run()


__all__ = [
    "DynaConfig",
    "ModelBuffer",
    "ErrorMap",
    "MetricsRecord",
    "DynaLoop",
    "evaluate_model_error",
    "run_dyna",
]
