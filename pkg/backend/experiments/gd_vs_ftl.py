"""FTL versus mini-batch gradient descent on identical Losse features.

Sweeps the number of edges per axis (λ) and the stream correlation d; both
learners see the same PRW stream and are scored on the same holdout.
"""
from __future__ import annotations

import logging
import os
from typing import List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from backend.core.evaluation import summarize_runs
from backend.core.learner import DEFAULT_EPSILON
from backend.experiments.parallel import run_tasks
from backend.experiments.stream import StreamConfig, results_frame, run_stream_single
from backend.storage.metrics_sink import write_report

logger = logging.getLogger(__name__)

METHOD_LABELS = {"losse_ftl": "ftl", "sgd": "gd"}


class GdVsFtlConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lam_grid: List[int] = Field(default_factory=lambda: [10, 20, 30], min_length=1)
    d_grid: List[float] = Field(default_factory=lambda: [0.0, 0.5, 0.9, 0.98], min_length=1)
    stream_length: int = Field(default=20_000, gt=0)
    holdout_size: int = Field(default=500, gt=0)
    tau: int = Field(default=50, gt=0)
    bound: float = Field(default=1.0, gt=0.0)
    kappa: int = Field(default=10, gt=0)
    rho: int = Field(default=2, gt=0)
    epsilon: float = Field(default=DEFAULT_EPSILON, ge=0.0)
    gd_learning_rate: float = Field(default=0.1, gt=0.0)
    gd_batch: int = Field(default=50, gt=0)

    @field_validator("lam_grid")
    @classmethod
    def _check_lam(cls, values: List[int]) -> List[int]:
        if any(v < 2 for v in values):
            raise ValueError(f"every lambda must be >= 2, got {values}")
        return values

    def stream_config(self) -> StreamConfig:
        return StreamConfig(
            d_grid=self.d_grid,
            stream_length=self.stream_length,
            holdout_size=self.holdout_size,
            tau=self.tau,
            bound=self.bound,
            kappa=self.kappa,
            rho=self.rho,
            lam=self.lam_grid[0],
            epsilon=self.epsilon,
            include_sgd=True,
            sgd_learning_rate=self.gd_learning_rate,
            sgd_batch=self.gd_batch,
        )


def run_gd_vs_ftl(cfg: GdVsFtlConfig, seeds: List[int], out_dir: str, workers: Optional[int] = None) -> pd.DataFrame:
    stream_cfg = cfg.stream_config()
    tasks = [{"cfg": stream_cfg, "d": d, "seed": seed, "lam": lam}
             for lam in cfg.lam_grid for d in cfg.d_grid for seed in seeds]
    results = run_tasks(run_stream_single, tasks, workers)

    frame = results_frame(results)
    frame["method"] = frame["method"].map(METHOD_LABELS)
    summary = summarize_runs(frame, ["lam", "method", "d"], "mse")
    report = summary.rename(columns={"mean": "mse_mean", "stderr": "mse_stderr", "n": "n_seeds"})
    write_report(report, os.path.join(out_dir, "report.csv"))
    return report


__all__ = ["GdVsFtlConfig", "run_gd_vs_ftl", "METHOD_LABELS"]
