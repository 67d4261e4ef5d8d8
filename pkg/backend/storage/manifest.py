"""JSON run manifests.

A manifest holds everything needed to re-run an experiment invocation: the
full resolved config, the seed list, the package version string and the
config hash. It carries no timestamps, so it is itself reproducible.
"""
from __future__ import annotations

import json
import logging
import os
from typing import Any, Dict, Mapping, Sequence

from backend.core.identifiers import compute_config_hash, version_string

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def build_manifest(experiment: str, config: Mapping[str, Any], seeds: Sequence[int]) -> Dict[str, Any]:
    config_hash = compute_config_hash({"experiment": experiment, "config": config, "seeds": list(seeds)})
    return {
        "manifest_version": MANIFEST_VERSION,
        "experiment": experiment,
        "config": dict(config),
        "seeds": [int(s) for s in seeds],
        "config_hash": config_hash,
        "version": version_string(config_hash),
    }


def write_manifest(run_dir: str, experiment: str, config: Mapping[str, Any], seeds: Sequence[int]) -> str:
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, MANIFEST_NAME)
    manifest = build_manifest(experiment, config, seeds)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote manifest {path} ({manifest['version']})")
    return path


def load_manifest(path: str) -> Dict[str, Any]:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('manifest_version')!r} in {path}")
    return manifest


__all__ = ["MANIFEST_NAME", "build_manifest", "write_manifest", "load_manifest"]
