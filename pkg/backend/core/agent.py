"""Linear Q-learning base agent over a fixed sparse state encoding.

Q(s, a) = φ(s)ᵀ W[:, a]. Updates are semi-gradient Q-learning touching only
the rows in the support of φ(s); the step size is divided by ‖φ(s)‖₁ when
`normalize_step` is on (the usual tile-coding convention). Exploration is
epsilon-greedy with a linear schedule; greedy ties break to the lowest index.
Mini-batch updates (replay and planning) are one vectorized mean step.
"""
from __future__ import annotations

import logging
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from backend.core.encoding import LosseEncoder, SparseVector, as_dense_vector, clamp_input, scale_to_bound
from backend.core.errors import NonFiniteError
from backend.core.world_model import SyntheticTransition, TransitionBatch

logger = logging.getLogger(__name__)


class AgentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = Field(default=0.99, gt=0.0, lt=1.0)
    learning_rate: float = Field(default=0.1, ge=0.0)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.05, ge=0.0, le=1.0)
    epsilon_decay_steps: int = Field(default=10_000, ge=0)
    normalize_step: bool = True
    seed: int = 0


class QAgent:
    def __init__(self, encoder, action_count: int, config: AgentConfig,
                 state_bounds: Optional[Sequence[Tuple[float, float]]] = None):
        self.encoder = encoder
        self.action_count = action_count
        self.config = config
        self.state_bounds = state_bounds
        self.weights = np.zeros((encoder.output_dim, action_count))
        self.rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
        self.steps = 0

    @property
    def epsilon(self) -> float:
        cfg = self.config
        if cfg.epsilon_decay_steps == 0:
            return cfg.epsilon_end
        frac = min(self.steps / cfg.epsilon_decay_steps, 1.0)
        return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)

    def tick(self) -> None:
        """Advance the exploration schedule by one environment interaction."""
        self.steps += 1

    def features(self, s) -> SparseVector:
        s = as_dense_vector(s, name="state")
        if self.state_bounds is not None and isinstance(self.encoder, LosseEncoder):
            bound = self.encoder.config.input_bound
            s = clamp_input(scale_to_bound(s, self.state_bounds, bound), bound)
        return self.encoder.encode(s)

    def q_values(self, s) -> np.ndarray:
        phi = self.features(s)
        return phi.values @ self.weights[phi.indices]

    def act(self, s, greedy: bool = False) -> int:
        if not greedy and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.action_count))
        # np.argmax returns the lowest index among ties
        return int(np.argmax(self.q_values(s)))

    def q_update(self, s, a: int, r: float, s_next, done: bool) -> "QAgent":
        phi = self.features(s)
        bootstrap = 0.0 if done else self.config.gamma * float(np.max(self.q_values(s_next)))
        target = float(r) + bootstrap
        if not np.isfinite(target):
            raise NonFiniteError(f"non-finite Q-learning target {target}")
        td_error = target - float(phi.values @ self.weights[phi.indices, a])
        step = self.config.learning_rate
        if self.config.normalize_step:
            mass = float(np.abs(phi.values).sum())
            step = step / mass if mass > 0 else 0.0
        self.weights[phi.indices, a] += step * td_error * phi.values
        return self

    def batch_features(self, states) -> Tuple[np.ndarray, np.ndarray]:
        """Fixed-width (n, k) index and value arrays for a batch of states.

        Padded slots carry value 0 and index 0, so they drop out of every dot
        product and update.
        """
        S = np.atleast_2d(np.asarray(states, dtype=float))
        if isinstance(self.encoder, LosseEncoder):
            if self.state_bounds is not None:
                bound = self.encoder.config.input_bound
                S = clamp_input(scale_to_bound(S, self.state_bounds, bound), bound)
            return self.encoder.encode_slots(S)
        rows = [self.encoder.encode(s) for s in S]
        width = max(max((phi.nnz for phi in rows), default=0), 1)
        idx = np.zeros((len(rows), width), dtype=np.int64)
        vals = np.zeros((len(rows), width))
        for i, phi in enumerate(rows):
            idx[i, :phi.nnz] = phi.indices
            vals[i, :phi.nnz] = phi.values
        return idx, vals

    def q_update_batch(self, batch: Union[TransitionBatch, Iterable[SyntheticTransition]]) -> "QAgent":
        """Mean semi-gradient Q-learning step over a mini-batch.

        Targets and TD errors are computed from the weights before the batch,
        and each sample contributes 1/n of its single-step update, so repeated
        samples in one batch do not compound.
        """
        if not isinstance(batch, TransitionBatch):
            transitions = list(batch)
            if not transitions:
                return self
            batch = TransitionBatch.from_transitions(transitions)
        n = batch.r.shape[0]
        if n == 0:
            return self
        idx, vals = self.batch_features(batch.s)
        next_idx, next_vals = self.batch_features(batch.s_next)
        q_next = np.einsum("nk,nka->na", next_vals, self.weights[next_idx])
        bootstrap = np.where(batch.done, 0.0, self.config.gamma * q_next.max(axis=1))
        targets = batch.r + bootstrap
        if not np.all(np.isfinite(targets)):
            raise NonFiniteError("non-finite Q-learning target in batch")
        actions = np.broadcast_to(batch.a[:, None], idx.shape)
        td_error = targets - np.einsum("nk,nk->n", vals, self.weights[idx, actions])
        step = np.full(n, self.config.learning_rate)
        if self.config.normalize_step:
            mass = np.abs(vals).sum(axis=1)
            step = np.divide(step, mass, out=np.zeros(n), where=mass > 0)
        np.add.at(self.weights, (idx, actions), (step * td_error / n)[:, None] * vals)
        return self

    def greedy_policy(self):
        return lambda s: self.act(s, greedy=True)

    def export_greedy_policy(self, states: np.ndarray) -> np.ndarray:
        """Greedy action for each row of `states` (for evaluation episodes/maps)."""
        return np.array([self.act(s, greedy=True) for s in np.atleast_2d(states)], dtype=np.int64)


def act(agent: QAgent, s, greedy: bool = False) -> int:
    return agent.act(s, greedy)


def q_update(agent: QAgent, s, a: int, r: float, s_next, done: bool) -> QAgent:
    return agent.q_update(s, a, r, s_next, done)


__all__ = ["AgentConfig", "QAgent", "act", "q_update"]
