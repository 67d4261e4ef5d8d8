"""Dyna versus model-free runs across seeds.

Each (arm, seed) replicate builds its own environment, agent and world
model, streams episode metrics to its CSV, and returns a small summary.
The model-free arm is the same loop with no planning, no synthetic
learning and model learning switched off, so both arms share the agent's
real-data update schedule exactly. Runs are compared on the area under
the step-indexed return curve (`return_auc`) as well as the final window.
"""
from __future__ import annotations

import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from backend.core.agent import AgentConfig, QAgent
from backend.core.dyna import DynaConfig, DynaLoop
from backend.core.encoding import build_losse
from backend.core.evaluation import final_window_mean, learning_curve_auc, summarize_runs
from backend.core.identifiers import build_run_id
from backend.core.world_model import build_world_model
from backend.environments import ENVIRONMENTS, make_env
from backend.experiments.parallel import run_tasks
from backend.storage.metrics_sink import MetricsSink, write_report
from backend.storage.plotting import plot_learning_curves, plot_wall_clock, wall_clock_series
from backend.storage.snapshots import save_world_model

logger = logging.getLogger(__name__)

ARMS = ("dyna", "model_free")
EXPERIMENT = "dyna"


class DynaExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    env: str = "gridworld"
    env_kwargs: Dict[str, Any] = Field(default_factory=dict)
    arms: List[str] = Field(default_factory=lambda: list(ARMS), min_length=1)

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

    model_kappa: int = Field(default=30, gt=0)
    model_rho: int = Field(default=2, gt=0)
    model_lam: int = Field(default=10, ge=2)
    model_epsilon: float = Field(default=0.01, ge=0.0)
    model_refresh_interval: int = Field(default=2500, ge=0)
    dt: float = Field(default=1.0, gt=0.0)

    agent_kappa: int = Field(default=20, gt=0)
    agent_rho: int = Field(default=2, gt=0)
    agent_lam: int = Field(default=10, ge=2)
    gamma: float = Field(default=0.99, gt=0.0, lt=1.0)
    learning_rate: float = Field(default=0.5, ge=0.0)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.05, ge=0.0, le=1.0)
    epsilon_decay_fraction: float = Field(default=0.2, ge=0.0, le=1.0)

    save_checkpoints: bool = False
    final_window: float = Field(default=0.1, gt=0.0, le=1.0)

    @field_validator("env")
    @classmethod
    def _check_env(cls, value: str) -> str:
        if value not in ENVIRONMENTS:
            raise ValueError(f"unknown environment '{value}', expected one of {sorted(ENVIRONMENTS)}")
        return value

    @field_validator("arms")
    @classmethod
    def _check_arms(cls, values: List[str]) -> List[str]:
        unknown = sorted(set(values) - set(ARMS))
        if unknown:
            raise ValueError(f"unknown arms {unknown}, expected a subset of {list(ARMS)}")
        return values

    def loop_config(self, arm: str, seed: int) -> DynaConfig:
        planning = arm == "dyna"
        return DynaConfig(
            epochs=self.epochs,
            interactions_per_epoch=self.interactions_per_epoch,
            planning_steps=self.planning_steps if planning else 0,
            learning_steps=self.learning_steps if planning else 0,
            unroll_length=self.unroll_length,
            model_update_interval=self.model_update_interval,
            real_update_interval=self.real_update_interval,
            planning_batch=self.planning_batch,
            planning_per_real=self.planning_per_real,
            model_buffer_capacity=self.model_buffer_capacity,
            error_threshold=self.error_threshold,
            error_eval_every=self.error_eval_every if planning else 0,
            grid_resolution=self.grid_resolution,
            seed=seed,
        )

    def agent_config(self, seed: int) -> AgentConfig:
        total = self.epochs * self.interactions_per_epoch
        return AgentConfig(
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            epsilon_start=self.epsilon_start,
            epsilon_end=self.epsilon_end,
            epsilon_decay_steps=int(round(self.epsilon_decay_fraction * total)),
            seed=seed,
        )


def _derived_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def run_dyna_single(cfg: DynaExperimentConfig, arm: str, seed: int, out_root: str) -> Dict[str, Any]:
    """One (arm, seed) replicate; writes metrics/timing CSVs and returns a summary row."""
    env = make_env(cfg.env, seed=seed, **cfg.env_kwargs)
    spec = env.spec
    agent_encoder = build_losse({"input_dim": spec.state_dim, "kappa": cfg.agent_kappa, "rho": cfg.agent_rho,
                                 "lambda": cfg.agent_lam, "seed": _derived_seed(seed, 11)})
    agent = QAgent(agent_encoder, spec.action_count, cfg.agent_config(seed), state_bounds=spec.state_bounds)
    learn_model = arm == "dyna"
    model = None
    if learn_model:
        model = build_world_model(spec, kappa=cfg.model_kappa, rho=cfg.model_rho, lam=cfg.model_lam,
                                  seed=_derived_seed(seed, 13), epsilon=cfg.model_epsilon, dt=cfg.dt,
                                  refresh_interval=cfg.model_refresh_interval or None)

    run_id = build_run_id(EXPERIMENT, arm, seed)
    sink = MetricsSink(out_root, EXPERIMENT)
    sink.open_run(run_id)
    loop = DynaLoop(env, agent, model, cfg.loop_config(arm, seed), learn_model=learn_model)
    returns: List[float] = []
    end_steps: List[int] = []
    for record in loop.run():
        sink.append(run_id, [record])
        returns.append(record.normalized_return)
        end_steps.append(record.step)

    summary: Dict[str, Any] = {
        "arm": arm,
        "seed": seed,
        "episodes": len(returns),
        "final_normalized_return": final_window_mean(returns, cfg.final_window),
        "return_auc": learning_curve_auc(end_steps, returns, loop.real_transitions),
        "model_error_fraction": np.nan,
        "truncated_rollouts": loop.truncated_rollouts,
    }
    if learn_model:
        error_fraction = loop.evaluate_error_map()
        summary["model_error_fraction"] = error_fraction
        map_dir = os.path.join(sink.run_dir, "error_maps")
        os.makedirs(map_dir, exist_ok=True)
        loop.latest_error_map.to_csv(os.path.join(map_dir, f"{run_id}.csv"))
        if cfg.save_checkpoints:
            save_world_model(model, sink.run_dir, run_id)
    logger.info(f"{run_id}: {len(returns)} episodes, final normalized return "
                f"{summary['final_normalized_return']:.3f}, return AUC {summary['return_auc']:.3f}")
    return summary


def run_dyna_experiment(cfg: DynaExperimentConfig, seeds: List[int], out_root: str,
                        workers: Optional[int] = None) -> pd.DataFrame:
    tasks = [{"cfg": cfg, "arm": arm, "seed": seed, "out_root": out_root} for arm in cfg.arms for seed in seeds]
    frame = pd.DataFrame(run_tasks(run_dyna_single, tasks, workers))

    sink = MetricsSink(out_root, EXPERIMENT)
    write_report(frame.sort_values(["arm", "seed"]), os.path.join(sink.run_dir, "runs.csv"))
    report = summarize_runs(frame, ["arm"], "final_normalized_return").rename(
        columns={"mean": "return_mean", "stderr": "return_stderr", "n": "n_seeds"})
    errors = summarize_runs(frame, ["arm"], "model_error_fraction").rename(
        columns={"mean": "error_fraction_mean", "stderr": "error_fraction_stderr"}).drop(columns="n")
    auc = summarize_runs(frame, ["arm"], "return_auc").rename(
        columns={"mean": "auc_mean", "stderr": "auc_stderr"}).drop(columns="n")
    report = report.merge(auc, on="arm").merge(errors, on="arm")
    write_report(report, os.path.join(sink.run_dir, "report.csv"))

    metrics_paths = [sink.metrics_path(build_run_id(EXPERIMENT, t["arm"], t["seed"])) for t in tasks]
    plot_learning_curves(metrics_paths, os.path.join(sink.run_dir, "learning_curves.svg"),
                         title=f"{cfg.env}: normalized episode return")
    series = wall_clock_series(metrics_paths, sink.timing_dir)
    write_report(series, os.path.join(sink.timing_dir, "wall_clock_series.csv"))
    plot_wall_clock(series, os.path.join(sink.timing_dir, "wall_clock.svg"), title=f"{cfg.env}: wall-clock efficiency")
    return report


__all__ = ["ARMS", "DynaExperimentConfig", "run_dyna_single", "run_dyna_experiment"]
