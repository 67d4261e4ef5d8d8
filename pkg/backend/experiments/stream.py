"""Stream learning under covariate shift (piecewise random walk).

For each d and seed, Losse-FTL (and optionally SGD on the same features)
consumes one PRW stream in a single pass and is scored on a holdout drawn
independently across all latent positions. Optionally the distance between
the incremental weights and the batch ridge oracle is tracked every
`proximity_interval` steps.

SGD averages its gradient over `sgd_batch` samples (one drift segment by
default). With `refresh_interval` set, FTL jointly re-solves its active rows
every that many updates, and the proximity rows carry the last refresh drift.
"""
from __future__ import annotations

import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from backend.core.encoding import build_losse, clamp_input
from backend.core.errors import ConfigError
from backend.core.evaluation import mse, summarize_runs
from backend.core.learner import DEFAULT_EPSILON, FtlLearner, SgdLearner
from backend.environments.prw import PrwConfig, PrwStream, prw_holdout
from backend.experiments.parallel import run_tasks
from backend.storage.metrics_sink import write_report

logger = logging.getLogger(__name__)


class StreamConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    d_grid: List[float] = Field(default_factory=lambda: [0.0, 0.5, 0.9, 0.98], min_length=1)
    stream_length: int = Field(default=20_000, gt=0)
    holdout_size: int = Field(default=500, gt=0)
    tau: int = Field(default=50, gt=0)
    bound: float = Field(default=1.0, gt=0.0)
    input_scale: Optional[float] = Field(default=None, gt=0.0)
    kappa: int = Field(default=10, gt=0)
    rho: int = Field(default=2, gt=0)
    lam: int = Field(default=10, ge=2)
    epsilon: float = Field(default=DEFAULT_EPSILON, ge=0.0)
    include_sgd: bool = True
    sgd_learning_rate: float = Field(default=0.1, gt=0.0)
    sgd_batch: Optional[int] = Field(default=50, gt=0)
    proximity_interval: int = Field(default=0, ge=0)
    refresh_interval: int = Field(default=0, ge=0)

    @field_validator("d_grid")
    @classmethod
    def _check_d(cls, values: List[float]) -> List[float]:
        for d in values:
            if not 0.0 <= d < 1.0:
                raise ValueError(f"d must lie in [0, 1), got {d}")
        return values

    def scale(self, input_bound: float = 3.0) -> float:
        return self.input_scale if self.input_scale is not None else input_bound / self.bound


def run_stream_single(cfg: StreamConfig, d: float, seed: int, lam: Optional[int] = None,
                      methods=("losse_ftl", "sgd")) -> Dict[str, Any]:
    """One (d, seed) replicate. Returns holdout MSE per method and proximity rows."""
    if not 0.0 <= d < 1.0:
        raise ConfigError(f"d must lie in [0, 1), got {d}")
    lam = lam or cfg.lam
    encoder = build_losse({"input_dim": 1, "kappa": cfg.kappa, "rho": cfg.rho, "lambda": lam, "seed": seed})
    bound = encoder.config.input_bound
    scale = cfg.scale(bound)
    prw = PrwConfig(d=d, bound=cfg.bound, tau=cfg.tau, seed=seed)

    def featurize(x: float):
        return encoder.encode(clamp_input([x * scale], bound))

    ftl = None
    if "losse_ftl" in methods:
        ftl = FtlLearner(encoder.output_dim, 1, epsilon=cfg.epsilon, refresh_interval=cfg.refresh_interval or None)
    sgd = None
    if "sgd" in methods:
        sgd = SgdLearner(encoder.output_dim, 1, cfg.sgd_learning_rate, batch=cfg.sgd_batch)

    proximity: List[Dict[str, Any]] = []
    xs, ys = PrwStream(prw).take(cfg.stream_length)
    for t, (x, y) in enumerate(zip(xs.tolist(), ys.tolist()), start=1):
        phi = featurize(x)
        if ftl is not None:
            ftl.observe_sparse(phi, [y])
        if sgd is not None:
            sgd.step(phi, [y])
        if ftl is not None and cfg.proximity_interval and t % cfg.proximity_interval == 0:
            oracle = ftl.oracle_weights()
            denom = np.linalg.norm(oracle)
            rel = float(np.linalg.norm(ftl.W - oracle) / denom) if denom > 0 else 0.0
            proximity.append({"d": d, "seed": seed, "step": t, "relative_error": rel,
                              "refresh_drift": ftl.last_refresh_drift})

    hx, hy = prw_holdout(prw, size=cfg.holdout_size, seed=seed)
    features = [featurize(x) for x in hx.tolist()]
    result: Dict[str, Any] = {"d": d, "seed": seed, "lam": lam, "mse": {}, "proximity": proximity}
    if ftl is not None:
        result["mse"]["losse_ftl"] = mse([ftl.predict(phi)[0] for phi in features], hy)
    if sgd is not None:
        result["mse"]["sgd"] = mse([sgd.predict(phi)[0] for phi in features], hy)
    logger.info(f"stream d={d} seed={seed}: " + ", ".join(f"{k}={v:.5f}" for k, v in result["mse"].items()))
    return result


def results_frame(results: List[Dict[str, Any]]) -> pd.DataFrame:
    rows = [{"method": method, "d": r["d"], "lam": r["lam"], "seed": r["seed"], "mse": value}
            for r in results for method, value in r["mse"].items()]
    return pd.DataFrame(rows, columns=["method", "d", "lam", "seed", "mse"])


def run_stream(cfg: StreamConfig, seeds: List[int], out_dir: str, workers: Optional[int] = None) -> pd.DataFrame:
    methods = ("losse_ftl", "sgd") if cfg.include_sgd else ("losse_ftl",)
    tasks = [{"cfg": cfg, "d": d, "seed": seed, "methods": methods} for d in cfg.d_grid for seed in seeds]
    results = run_tasks(run_stream_single, tasks, workers)

    summary = summarize_runs(results_frame(results), ["method", "d"], "mse")
    report = summary.rename(columns={"mean": "mse_mean", "stderr": "mse_stderr", "n": "n_seeds"})
    write_report(report, os.path.join(out_dir, "report.csv"))
    if cfg.proximity_interval:
        proximity = pd.DataFrame([row for r in results for row in r["proximity"]],
                                 columns=["d", "seed", "step", "relative_error", "refresh_drift"])
        write_report(proximity, os.path.join(out_dir, "proximity.csv"))
    return report


__all__ = ["StreamConfig", "run_stream_single", "run_stream", "results_frame"]
