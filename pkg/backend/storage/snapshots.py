"""Checkpoint locations for trained world models.

World models are saved at the end of a Dyna run under
  <run_dir>/checkpoints/<run_id>/
so the error map can be recomputed offline.
"""
from __future__ import annotations

import logging
import os

from backend.core.world_model import WorldModel

logger = logging.getLogger(__name__)


def checkpoint_dir(run_dir: str, run_id: str) -> str:
    return os.path.join(run_dir, "checkpoints", run_id)


def save_world_model(model: WorldModel, run_dir: str, run_id: str) -> str:
    target = checkpoint_dir(run_dir, run_id)
    model.save(target)
    return target


def load_world_model(run_dir: str, run_id: str) -> WorldModel:
    source = checkpoint_dir(run_dir, run_id)
    if not os.path.isdir(source):
        raise FileNotFoundError(f"no checkpoint for run '{run_id}' under {run_dir}")
    return WorldModel.load(source)


__all__ = ["checkpoint_dir", "save_world_model", "load_world_model"]
