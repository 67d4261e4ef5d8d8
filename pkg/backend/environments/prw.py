"""Piecewise random walk (PRW) stream with a single correlation knob d.

Every τ steps the latent mean drifts, S ← (1 − c)·S + Z with Z ~ N(0, σ²);
each step emits x ~ N(S, β²) and target y = sin(2π x²). With
c = 1 − sqrt(1 − d), σ² = d²(B/2)², β² = (1 − d)(B/2)², the marginal of x is
N(0, (B/2)²) for every d; d = 0 recovers an i.i.d. stream.

Drift noise and observation noise use independent RNG streams, and
observations are drawn one drift segment at a time, so `prw_next` and
`take` produce the same sequence.
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class PrwConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    d: float = Field(ge=0.0, lt=1.0)
    bound: float = Field(default=1.0, gt=0.0, alias="B")
    tau: int = Field(default=50, gt=0)
    seed: int = 0

    @property
    def c(self) -> float:
        return 1.0 - math.sqrt(1.0 - self.d)

    @property
    def sigma2(self) -> float:
        return self.d ** 2 * (self.bound / 2.0) ** 2

    @property
    def beta2(self) -> float:
        return (1.0 - self.d) * (self.bound / 2.0) ** 2

    @property
    def latent_var(self) -> float:
        """Stationary variance of S: σ² / (2c − c²); zero when d = 0."""
        denom = 2 * self.c - self.c ** 2
        return self.sigma2 / denom if denom > 0 else 0.0

    @property
    def xi2(self) -> float:
        return self.beta2 + self.latent_var


def prw_target(x):
    return np.sin(2.0 * np.pi * np.asarray(x, dtype=float) ** 2)


class PrwStream:
    """Stateful PRW generator; the latent S starts from its stationary law."""

    def __init__(self, config: PrwConfig):
        self.config = config
        drift_seq, obs_seq = np.random.SeedSequence(config.seed).spawn(2)
        self._drift_rng = np.random.default_rng(drift_seq)
        self._obs_rng = np.random.default_rng(obs_seq)
        self.latent = float(self._drift_rng.normal(0.0, math.sqrt(config.latent_var))) if config.latent_var > 0 else 0.0
        self.t = 0
        self._segment = np.empty(0)
        self._cursor = 0

    def _next_segment(self) -> None:
        cfg = self.config
        z = self._drift_rng.normal(0.0, math.sqrt(cfg.sigma2)) if cfg.sigma2 > 0 else 0.0
        self.latent = (1.0 - cfg.c) * self.latent + z
        self._segment = self.latent + math.sqrt(cfg.beta2) * self._obs_rng.standard_normal(cfg.tau)
        self._cursor = 0

    def next(self) -> Tuple[float, float]:
        if self._cursor >= self._segment.size:
            self._next_segment()
        x = float(self._segment[self._cursor])
        self._cursor += 1
        self.t += 1
        return x, float(prw_target(x))

    def take(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        xs = np.empty(n)
        filled = 0
        while filled < n:
            if self._cursor >= self._segment.size:
                self._next_segment()
            chunk = self._segment[self._cursor:self._cursor + (n - filled)]
            xs[filled:filled + chunk.size] = chunk
            filled += chunk.size
            self._cursor += chunk.size
        self.t += n
        return xs, prw_target(xs)


def prw_next(stream: PrwStream) -> Tuple[float, float]:
    return stream.next()


def prw_holdout(config: PrwConfig, size: int = 500, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Independent samples from the equilibrium marginal N(0, ξ²), i.e. across all S."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    xs = rng.normal(0.0, math.sqrt(config.xi2), size=size)
    return xs, prw_target(xs)


__all__ = ["PrwConfig", "PrwStream", "prw_next", "prw_target", "prw_holdout"]
