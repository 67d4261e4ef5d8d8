"""Identifier and naming utilities for reproducible experiment storage.

Provides helpers to sanitize experiment/arm names for use as file and
directory names, to compute stable hashes of configurations, and to
derive per-run identifiers and output directories.
"""

import hashlib
import json
import os
import re
from typing import Any, Mapping, Tuple

_NON_ALNUM_RE = re.compile(r"[^a-z0-9]+")


def sanitize_fragment(value: str) -> str:
	"""Sanitize a string fragment for safe file naming.

	- Lowercase
	- Replace non-alphanumeric with single underscore
	- Trim leading/trailing underscores
	- Truncate to 48 chars to keep names manageable
	"""
	if not value:
		return "unknown"
	v = value.lower().strip()
	v = _NON_ALNUM_RE.sub("_", v)
	v = re.sub(r"_+", "_", v)
	v = v.strip("_")
	return v[:48] if v else "unknown"


def canonical_json(payload: Mapping[str, Any]) -> str:
	"""JSON with sorted keys and no whitespace; floats keep repr precision."""
	return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def compute_config_hash(payload: Mapping[str, Any]) -> str:
	"""Deterministic SHA-256 over the canonical JSON of a config mapping."""
	return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def build_run_id(experiment: str, arm: str, seed: int) -> str:
	"""Return the run id used for metrics files, e.g. ``dyna__model_free__s003``."""
	return f"{sanitize_fragment(experiment)}__{sanitize_fragment(arm)}__s{int(seed):03d}"


def build_run_directories(out_root: str, experiment: str) -> Tuple[str, str, str]:
	"""Return (run_dir, metrics_dir, timing_dir) for one experiment invocation.

	Metrics and timing are kept apart: metrics files are byte-deterministic,
	timing files are not.
	"""
	run_dir = os.path.join(out_root, sanitize_fragment(experiment))
	metrics_dir = os.path.join(run_dir, "metrics")
	timing_dir = os.path.join(run_dir, "timing")
	return run_dir, metrics_dir, timing_dir


def version_string(config_hash: str) -> str:
	"""git-describe style version: package version plus a short config hash."""
	from backend import __version__
	return f"v{__version__}-g{config_hash[:10]}"


def parse_run_id(run_id: str) -> Tuple[str, str, int]:
	"""Inverse of build_run_id: ``dyna__model_free__s003`` -> ("dyna", "model_free", 3)."""
	parts = run_id.split("__")
	if len(parts) != 3 or not parts[2].startswith("s") or not parts[2][1:].isdigit():
		raise ValueError(f"not a run id: {run_id!r}")
	return parts[0], parts[1], int(parts[2][1:])
