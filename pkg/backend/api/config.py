"""Experiment configuration loading.

Precedence (lowest to highest):
  built-in defaults < config.yaml section < environment (.env) < command-line flags

config.yaml layout:
  output:        {dir, workers}
  stream:        {seeds, ...StreamConfig}
  denoise:       {seeds, dataset_path, ...DenoiseExperimentConfig}
  encoder_bench: {seeds, ...EncoderBenchConfig}    (data/training settings from `denoise`)
  gd_vs_ftl:     {seeds, ...GdVsFtlConfig}
  dyna:          {seeds, ...DynaExperimentConfig}

Environment variables: LOSSE_DATASET_PATH, LOSSE_WORKERS, LOSSE_OUTPUT_DIR.
"""
from __future__ import annotations

import logging
import os
from typing import Any, Dict, List, Literal, Mapping, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator

from backend.core.encoding import validate_config
from backend.core.errors import ConfigError
from backend.experiments.denoise import DenoiseExperimentConfig, EncoderBenchConfig
from backend.experiments.dyna_runner import DynaExperimentConfig
from backend.experiments.gd_vs_ftl import GdVsFtlConfig
from backend.experiments.stream import StreamConfig

logger = logging.getLogger(__name__)

ExperimentKind = Literal["stream", "denoise", "encoder-bench", "gd-vs-ftl", "dyna"]
KINDS = ("stream", "denoise", "encoder-bench", "gd-vs-ftl", "dyna")

DEFAULT_CONFIG_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__), "../../config.yaml"))

# fields that do not influence results and stay out of manifests
_RUNTIME_FIELDS = {"workers", "output_dir"}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ExperimentKind
    seeds: List[int] = Field(default_factory=lambda: [0])
    output_dir: str = "results"
    workers: Optional[int] = Field(default=None, ge=1)
    dataset_path: Optional[str] = None
    stream: StreamConfig = Field(default_factory=StreamConfig)
    denoise: DenoiseExperimentConfig = Field(default_factory=DenoiseExperimentConfig)
    encoder_bench: EncoderBenchConfig = Field(default_factory=EncoderBenchConfig)
    gd_vs_ftl: GdVsFtlConfig = Field(default_factory=GdVsFtlConfig)
    dyna: DynaExperimentConfig = Field(default_factory=DynaExperimentConfig)

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, values: List[int]) -> List[int]:
        if not values:
            raise ValueError("seed list must not be empty")
        if len(set(values)) != len(values):
            raise ValueError(f"seed list has duplicates: {values}")
        return values

    def reproducible_dump(self) -> Dict[str, Any]:
        """Everything that determines the outputs, for manifests and re-runs."""
        return self.model_dump(mode="json", exclude=_RUNTIME_FIELDS)


def section_name(kind: str) -> str:
    return kind.replace("-", "_")


def load_yaml(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping at the top level")
    return data


def _env_overrides() -> Dict[str, Any]:
    load_dotenv()
    out: Dict[str, Any] = {}
    if os.getenv("LOSSE_DATASET_PATH"):
        out["dataset_path"] = os.getenv("LOSSE_DATASET_PATH")
    if os.getenv("LOSSE_OUTPUT_DIR"):
        out["output_dir"] = os.getenv("LOSSE_OUTPUT_DIR")
    if os.getenv("LOSSE_WORKERS"):
        try:
            out["workers"] = int(os.getenv("LOSSE_WORKERS"))
        except ValueError:
            raise ConfigError(f"LOSSE_WORKERS must be an integer, got {os.getenv('LOSSE_WORKERS')!r}") from None
    return out


def _from_file(kind: str, data: Mapping[str, Any]) -> Dict[str, Any]:
    merged: Dict[str, Any] = {"kind": kind}
    output = dict(data.get("output") or {})
    if "dir" in output:
        merged["output_dir"] = output["dir"]
    if "workers" in output:
        merged["workers"] = output["workers"]
    for name in ("stream", "denoise", "encoder_bench", "gd_vs_ftl", "dyna"):
        section = dict(data.get(name) or {})
        seeds = section.pop("seeds", None)
        dataset_path = section.pop("dataset_path", None)
        if name == section_name(kind):
            if seeds is not None:
                merged["seeds"] = seeds
        if dataset_path is not None and kind in ("denoise", "encoder-bench") and name in ("denoise", section_name(kind)):
            merged["dataset_path"] = dataset_path
        if section:
            merged[name] = section
    return merged


def resolve_config(kind: str, config_path: Optional[str] = DEFAULT_CONFIG_PATH,
                   overrides: Optional[Mapping[str, Any]] = None,
                   manifest: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Merge defaults, YAML, environment and flag overrides into one validated config.

    With a manifest, its recorded config replaces the YAML layer so the run is
    reproduced exactly; only runtime fields (workers, output dir) may still change.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind '{kind}', expected one of {list(KINDS)}")
    if manifest is not None:
        if manifest.get("experiment") != kind:
            raise ConfigError(f"manifest is for '{manifest.get('experiment')}', not '{kind}'")
        merged = dict(manifest["config"])
        merged["seeds"] = list(manifest["seeds"])
    else:
        merged = _from_file(kind, load_yaml(config_path))
    layered = {**_env_overrides(), **{k: v for k, v in (overrides or {}).items() if v is not None}}
    if manifest is not None:
        layered = {k: v for k, v in layered.items() if k in _RUNTIME_FIELDS}
    merged.update(layered)
    if "seeds" in merged and not merged["seeds"]:
        raise ConfigError("seed list must not be empty")
    cfg = validate_config(ExperimentConfig, merged)
    logger.debug(f"Resolved {kind} config: {cfg.reproducible_dump()}")
    return cfg


__all__ = ["KINDS", "DEFAULT_CONFIG_PATH", "ExperimentConfig", "section_name", "load_yaml", "resolve_config"]
