"""Dyna world model: delta-state dynamics and reward heads over one shared Losse encoding.

Input x = [scaled state, scaled one-hot action] is clamped to the encoder's
input bound and encoded once per transition; both FTL heads consume the same
sparse feature. Predictions are deterministic given the model state.

  observe(tr):       dynamics ← (s′ − s)/Δt, reward ← r
  predict_next(s,a): ŝ′ = clip(s + Δt·m̂(s,a)), r̂
  unroll(s0, π, k):  k on-policy model steps, stops early at terminal or non-finite states
"""
from __future__ import annotations

import json
import logging
import os
from typing import Callable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from backend.core.encoding import (
    LosseConfig,
    LosseEncoder,
    SparseVector,
    as_dense_vector,
    build_losse,
    clamp_input,
    scale_to_bound,
)
from backend.core.errors import ShapeError
from backend.core.learner import DEFAULT_EPSILON, FtlLearner
from backend.environments.base import EnvSpec, one_hot

logger = logging.getLogger(__name__)


class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray


class SyntheticTransition(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class TransitionBatch(NamedTuple):
    """Column-stacked SyntheticTransitions: s/s_next (n, state_dim), a/r/done (n,)."""
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[SyntheticTransition]) -> "TransitionBatch":
        if not transitions:
            raise ValueError("cannot stack an empty list of transitions")
        return cls(
            s=np.stack([np.asarray(tr.s, dtype=float) for tr in transitions]),
            a=np.array([int(tr.a) for tr in transitions], dtype=np.int64),
            r=np.array([float(tr.r) for tr in transitions]),
            s_next=np.stack([np.asarray(tr.s_next, dtype=float) for tr in transitions]),
            done=np.array([bool(tr.done) for tr in transitions]),
        )


ActionLike = Union[int, np.integer, Sequence[float], np.ndarray]


class WorldModel:
    def __init__(self, encoder: LosseEncoder, spec: EnvSpec, epsilon: float = DEFAULT_EPSILON, dt: float = 1.0,
                 storage: str = "auto", refresh_interval: Optional[int] = None):
        expected = spec.state_dim + spec.action_count
        if encoder.input_dim != expected:
            raise ShapeError(f"encoder input_dim {encoder.input_dim} != state_dim + action_count = {expected}")
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.encoder = encoder
        self.spec = spec
        self.dt = float(dt)
        D = encoder.output_dim
        self.dynamics = FtlLearner(D, spec.state_dim, epsilon=epsilon, storage=storage, refresh_interval=refresh_interval)
        self.reward = FtlLearner(D, 1, epsilon=epsilon, storage=storage, refresh_interval=refresh_interval)
        self._action_bounds = [(0.0, 1.0)] * spec.action_count
        self.transitions_observed = 0

    def _action_vector(self, a: ActionLike) -> np.ndarray:
        if np.isscalar(a):
            if not 0 <= int(a) < self.spec.action_count:
                raise ShapeError(f"action index {a} out of range for {self.spec.action_count} actions")
            return one_hot(int(a), self.spec.action_count)
        return as_dense_vector(a, self.spec.action_count, name="action")

    def features(self, s, a: ActionLike) -> SparseVector:
        s = as_dense_vector(s, self.spec.state_dim, name="state")
        bound = self.encoder.config.input_bound
        x = np.concatenate([
            scale_to_bound(s, self.spec.state_bounds, bound),
            scale_to_bound(self._action_vector(a), self._action_bounds, bound),
        ])
        return self.encoder.encode(clamp_input(x, bound))

    def observe(self, tr: Transition) -> "WorldModel":
        s = as_dense_vector(tr.s, self.spec.state_dim, name="s")
        s_next = as_dense_vector(tr.s_next, self.spec.state_dim, name="s_next")
        r = as_dense_vector([tr.r], 1, name="r")
        phi = self.features(s, tr.a)
        self.dynamics.observe_sparse(phi, (s_next - s) / self.dt)
        self.reward.observe_sparse(phi, r)
        self.transitions_observed += 1
        return self

    def refresh(self) -> float:
        """Jointly re-solve both heads; returns the larger relative weight drift."""
        return max(self.dynamics.refresh(), self.reward.refresh())

    def predict_next(self, s, a: ActionLike):
        s = as_dense_vector(s, self.spec.state_dim, name="state")
        phi = self.features(s, a)
        s_hat = self.spec.clip_state(s + self.dt * self.dynamics.predict(phi))
        return s_hat, float(self.reward.predict(phi)[0])

    def unroll(self, s0, policy: Callable[[np.ndarray], int], k: int,
               is_terminal: Optional[Callable[[np.ndarray], bool]] = None) -> List[SyntheticTransition]:
        if k < 1:
            raise ValueError(f"unroll length must be >= 1, got {k}")
        out: List[SyntheticTransition] = []
        s = as_dense_vector(s0, self.spec.state_dim, name="s0")
        for _ in range(k):
            a = int(policy(s))
            s_next, r = self.predict_next(s, a)
            if not (np.all(np.isfinite(s_next)) and np.isfinite(r)):
                logger.warning(f"Non-finite model prediction after {len(out)} unroll steps; truncating rollout")
                break
            done = bool(is_terminal(s_next)) if is_terminal is not None else False
            out.append(SyntheticTransition(s, a, r, s_next, done))
            if done:
                break
            s = s_next
        return out

    # ---------- Checkpoints ----------

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        config_hash = self.encoder.config.config_hash()
        with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as f:
            json.dump({
                "encoder": self.encoder.config.model_dump(mode="json", by_alias=True),
                "env_spec": self.spec.model_dump(mode="json"),
                "dt": self.dt,
                "transitions_observed": self.transitions_observed,
                "config_hash": config_hash,
            }, f, indent=2, sort_keys=True)
        self.dynamics.to_snapshot(os.path.join(directory, "dynamics.npz"), config_hash)
        self.reward.to_snapshot(os.path.join(directory, "reward.npz"), config_hash)
        logger.info(f"Saved world model checkpoint to {directory}")

    @classmethod
    def load(cls, directory: str) -> "WorldModel":
        with open(os.path.join(directory, "model.json"), "r", encoding="utf-8") as f:
            meta = json.load(f)
        encoder = build_losse(LosseConfig.model_validate(meta["encoder"]))
        spec = EnvSpec.model_validate(meta["env_spec"])
        dynamics = FtlLearner.from_snapshot(os.path.join(directory, "dynamics.npz"))
        model = cls(encoder, spec, epsilon=dynamics.epsilon, dt=meta["dt"], storage=dynamics.storage,
                    refresh_interval=dynamics.refresh_interval)
        model.dynamics = dynamics
        model.reward = FtlLearner.from_snapshot(os.path.join(directory, "reward.npz"))
        model.transitions_observed = int(meta["transitions_observed"])
        return model


def build_world_model(spec: EnvSpec, kappa: int = 30, rho: int = 2, lam: int = 10, seed: int = 0,
                      epsilon: float = DEFAULT_EPSILON, dt: float = 1.0, refresh_interval: Optional[int] = None,
                      **encoder_kwargs) -> WorldModel:
    encoder = build_losse({
        "input_dim": spec.state_dim + spec.action_count,
        "kappa": kappa,
        "rho": rho,
        "lambda": lam,
        "seed": seed,
        **encoder_kwargs,
    })
    return WorldModel(encoder, spec, epsilon=epsilon, dt=dt, refresh_interval=refresh_interval)


def observe(model: WorldModel, tr: Transition) -> WorldModel:
    return model.observe(tr)


def predict_next(model: WorldModel, s, a: ActionLike):
    return model.predict_next(s, a)


def unroll(model: WorldModel, s0, policy: Callable[[np.ndarray], int], k: int,
           is_terminal: Optional[Callable[[np.ndarray], bool]] = None) -> List[SyntheticTransition]:
    return model.unroll(s0, policy, k, is_terminal)


__all__ = [
    "Transition",
    "SyntheticTransition",
    "TransitionBatch",
    "WorldModel",
    "build_world_model",
    "observe",
    "predict_next",
    "unroll",
]
