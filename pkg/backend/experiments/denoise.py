"""Image-denoising benchmark of the feature encoders.

Noisy center patches are encoded, then a linear head predicts the clean
patch. Sparse encoders (Losse, TileCode) get the closed-form FTL head; dense
random features (Fourier, ReLU) get an Adam-trained head. All encoders see
the same scaled inputs bound·(2x − 1), clamped to the input bound, and share
a budget of at most 80 nonzero features per sample.

Two entry points:
  run_denoise        one setting per encoder across patch sizes
  run_encoder_bench  hyperparameter sweep (Losse λ, dense projection scale)
"""
from __future__ import annotations

import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from backend.core.dense_head import AdamLinearHead
from backend.core.encoding import BaselineKind, build_baseline, build_losse, clamp_input
from backend.core.evaluation import mse, summarize_runs
from backend.core.learner import DEFAULT_EPSILON, FtlLearner
from backend.environments.denoise import DenoiseConfig, load_denoise_dataset
from backend.experiments.parallel import run_tasks
from backend.storage.metrics_sink import write_report

logger = logging.getLogger(__name__)

ENCODERS = ("losse", "relu", "tile_code", "fourier")
INPUT_BOUND = 3.0
ENCODE_CHUNK = 4096


class DenoiseExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    patch_sides: List[int] = Field(default_factory=lambda: [3, 4, 5, 6, 7], min_length=1)
    encoders: List[str] = Field(default_factory=lambda: list(ENCODERS), min_length=1)
    noise_sigma: float = Field(default=0.3, ge=0.0)
    train_fraction: float = Field(default=0.9, gt=0.0, lt=1.0)
    max_images: int = Field(default=60_000, gt=1)
    allow_synthetic: bool = True
    losse_kappa: int = Field(default=20, gt=0)
    losse_rho: int = Field(default=2, gt=0)
    losse_lam: int = Field(default=7, ge=2)
    dense_dim: int = Field(default=80, gt=0)
    fourier_scale: float = Field(default=0.3, gt=0.0)
    relu_scale: float = Field(default=0.3, gt=0.0)
    tile_grids: int = Field(default=80, gt=0)
    tile_rho: int = Field(default=2, gt=0)
    tile_bins: int = Field(default=10, ge=1)
    epsilon: float = Field(default=DEFAULT_EPSILON, ge=0.0)
    adam_learning_rate: float = Field(default=1e-4, gt=0.0)
    adam_epochs: int = Field(default=100, gt=0)
    adam_batch: int = Field(default=32, gt=0)

    @field_validator("patch_sides")
    @classmethod
    def _check_sides(cls, values: List[int]) -> List[int]:
        if any(not 2 <= v <= 7 for v in values):
            raise ValueError(f"patch sides must lie in 2..7, got {values}")
        return values

    @field_validator("encoders")
    @classmethod
    def _check_encoders(cls, values: List[str]) -> List[str]:
        unknown = sorted(set(values) - set(ENCODERS))
        if unknown:
            raise ValueError(f"unknown encoders {unknown}, expected a subset of {list(ENCODERS)}")
        return values

    def dataset_config(self, patch_side: int, seed: int) -> DenoiseConfig:
        return DenoiseConfig(patch_side=patch_side, noise_sigma=self.noise_sigma, train_fraction=self.train_fraction,
                             max_images=self.max_images, allow_synthetic=self.allow_synthetic, seed=seed)


class EncoderBenchConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    patch_sides: List[int] = Field(default_factory=lambda: [5], min_length=1)
    lam_sweep: List[int] = Field(default_factory=lambda: [5, 6, 7, 8, 9], min_length=1)
    scale_sweep: List[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5, 1.0, 5.0, 10.0], min_length=1)


def scale_pixels(pixels: np.ndarray, bound: float = INPUT_BOUND) -> np.ndarray:
    return clamp_input(bound * (2.0 * np.asarray(pixels, dtype=float) - 1.0), bound)


def _encode_rows(encoder, inputs: np.ndarray, chunk: int = ENCODE_CHUNK):
    for start in range(0, len(inputs), chunk):
        yield from encoder.encode_many(inputs[start:start + chunk])


def _fit_sparse(encoder, train, test, epsilon: float):
    learner = FtlLearner(encoder.output_dim, train.targets.shape[1], epsilon=epsilon)
    nnz = []
    for phi, y in zip(_encode_rows(encoder, scale_pixels(train.inputs)), train.targets):
        nnz.append(phi.nnz)
        learner.observe_sparse(phi, y)
    predictions = np.vstack([learner.predict(phi) for phi in _encode_rows(encoder, scale_pixels(test.inputs))])
    return predictions, float(np.mean(nnz))


def _fit_dense(encoder, train, test, cfg: DenoiseExperimentConfig, seed: int):
    features = encoder.transform(scale_pixels(train.inputs))
    head = AdamLinearHead(encoder.output_dim, train.targets.shape[1], learning_rate=cfg.adam_learning_rate,
                          batch_size=cfg.adam_batch, epochs=cfg.adam_epochs, seed=seed)
    head.fit(features, train.targets)
    predictions = head.predict(encoder.transform(scale_pixels(test.inputs)))
    return predictions, float(np.count_nonzero(features, axis=1).mean())


def run_denoise_single(cfg: DenoiseExperimentConfig, patch_side: int, encoder: str, seed: int,
                       dataset_path: Optional[str] = None, lam: Optional[int] = None,
                       scale: Optional[float] = None) -> Dict[str, Any]:
    """Train and score one (encoder setting, patch size, seed) cell."""
    train, test = load_denoise_dataset(dataset_path, cfg.dataset_config(patch_side, seed))
    input_dim = patch_side * patch_side

    if encoder == "losse":
        lam = lam or cfg.losse_lam
        enc = build_losse({"input_dim": input_dim, "kappa": cfg.losse_kappa, "rho": cfg.losse_rho,
                           "lambda": lam, "input_bound": INPUT_BOUND, "seed": seed})
        predictions, nnz = _fit_sparse(enc, train, test, cfg.epsilon)
        setting = f"lambda={lam}"
    elif encoder == "tile_code":
        enc = build_baseline({"kind": BaselineKind.TILE_CODE, "input_dim": input_dim, "kappa": cfg.tile_grids,
                              "rho": cfg.tile_rho, "bins": cfg.tile_bins, "seed": seed})
        predictions, nnz = _fit_sparse(enc, train, test, cfg.epsilon)
        setting = f"bins={cfg.tile_bins}"
    elif encoder in ("fourier", "relu"):
        default_scale = cfg.fourier_scale if encoder == "fourier" else cfg.relu_scale
        scale = scale or default_scale
        enc = build_baseline({"kind": encoder, "input_dim": input_dim, "output_dim": cfg.dense_dim,
                              "projection_scale": scale, "seed": seed})
        predictions, nnz = _fit_dense(enc, train, test, cfg, seed)
        setting = f"scale={scale:g}"
    else:
        raise ValueError(f"unknown encoder '{encoder}'")

    error = mse(predictions, test.targets)
    logger.info(f"denoise {encoder} ({setting}) patch {patch_side} seed {seed}: test MSE {error:.5f}")
    return {"encoder": encoder, "setting": setting, "patch_side": patch_side, "seed": seed,
            "mse": error, "nnz": nnz, "feature_dim": int(enc.output_dim)}


def _summarize(results: List[Dict[str, Any]], keys: List[str]) -> pd.DataFrame:
    frame = pd.DataFrame(results)
    summary = summarize_runs(frame, keys, "mse").rename(
        columns={"mean": "mse_mean", "stderr": "mse_stderr", "n": "n_seeds"})
    extras = frame.groupby(keys, sort=True).agg(nnz_mean=("nnz", "mean"), feature_dim=("feature_dim", "first"))
    return summary.merge(extras.reset_index(), on=keys)


def run_denoise(cfg: DenoiseExperimentConfig, seeds: List[int], out_dir: str, dataset_path: Optional[str] = None,
                workers: Optional[int] = None) -> pd.DataFrame:
    tasks = [{"cfg": cfg, "patch_side": p, "encoder": e, "seed": s, "dataset_path": dataset_path}
             for p in cfg.patch_sides for e in cfg.encoders for s in seeds]
    report = _summarize(run_tasks(run_denoise_single, tasks, workers), ["encoder", "patch_side"])
    write_report(report, os.path.join(out_dir, "report.csv"))
    return report


def run_encoder_bench(cfg: DenoiseExperimentConfig, bench: EncoderBenchConfig, seeds: List[int], out_dir: str,
                      dataset_path: Optional[str] = None, workers: Optional[int] = None) -> pd.DataFrame:
    tasks: List[Dict[str, Any]] = []
    for p in bench.patch_sides:
        for s in seeds:
            base = {"cfg": cfg, "patch_side": p, "seed": s, "dataset_path": dataset_path}
            if "losse" in cfg.encoders:
                tasks += [{**base, "encoder": "losse", "lam": lam} for lam in bench.lam_sweep]
            for kind in ("fourier", "relu"):
                if kind in cfg.encoders:
                    tasks += [{**base, "encoder": kind, "scale": scale} for scale in bench.scale_sweep]
            if "tile_code" in cfg.encoders:
                tasks.append({**base, "encoder": "tile_code"})
    report = _summarize(run_tasks(run_denoise_single, tasks, workers), ["encoder", "setting", "patch_side"])
    write_report(report, os.path.join(out_dir, "report.csv"))

    best = report.loc[report.groupby(["encoder", "patch_side"], sort=True)["mse_mean"].idxmin()]
    write_report(best.reset_index(drop=True), os.path.join(out_dir, "best.csv"))
    return report


__all__ = [
    "ENCODERS",
    "DenoiseExperimentConfig",
    "EncoderBenchConfig",
    "scale_pixels",
    "run_denoise_single",
    "run_denoise",
    "run_encoder_bench",
]
