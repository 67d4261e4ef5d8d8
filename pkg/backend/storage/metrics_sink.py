"""Append-only CSV sinks for per-run metrics and timing.

Layout under one experiment directory:
  metrics/<run_id>.csv   step, episode, return, normalized_return, model_error_fraction
  timing/<run_id>.csv    step, update_wall_time

Metrics files contain only seeded quantities and are byte-identical across
re-runs; wall-clock measurements go to the timing files. Each run id owns
its files, so concurrent workers never share a handle. Floats are written
with repr precision and NaN as an empty field.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import threading
from typing import Dict, Iterable, List, Sequence

import pandas as pd

from backend.core.identifiers import build_run_directories

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["step", "episode", "return", "normalized_return", "model_error_fraction"]
TIMING_COLUMNS = ["step", "update_wall_time"]


def format_value(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(float(value))
    return str(value)


class _CsvAppender:
    def __init__(self, path: str, columns: Sequence[str]):
        self.path = path
        self.columns = list(columns)
        self._lock = threading.Lock()
        with open(path, "w", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow(self.columns)

    def append(self, rows: Iterable[Sequence]) -> None:
        with self._lock, open(self.path, "a", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            for row in rows:
                writer.writerow([format_value(v) for v in row])


class MetricsSink:
    def __init__(self, out_root: str, experiment: str):
        self.run_dir, self.metrics_dir, self.timing_dir = build_run_directories(out_root, experiment)
        os.makedirs(self.metrics_dir, exist_ok=True)
        os.makedirs(self.timing_dir, exist_ok=True)
        self._metrics: Dict[str, _CsvAppender] = {}
        self._timing: Dict[str, _CsvAppender] = {}
        self._lock = threading.Lock()

    def open_run(self, run_id: str) -> None:
        with self._lock:
            if run_id in self._metrics:
                raise ValueError(f"run '{run_id}' already open")
            self._metrics[run_id] = _CsvAppender(self.metrics_path(run_id), METRICS_COLUMNS)
            self._timing[run_id] = _CsvAppender(self.timing_path(run_id), TIMING_COLUMNS)

    def metrics_path(self, run_id: str) -> str:
        return os.path.join(self.metrics_dir, f"{run_id}.csv")

    def timing_path(self, run_id: str) -> str:
        return os.path.join(self.timing_dir, f"{run_id}.csv")

    def append(self, run_id: str, records: Iterable) -> int:
        """Write MetricsRecord-like objects for one run; returns the row count."""
        if run_id not in self._metrics:
            self.open_run(run_id)
        records = list(records)
        self._metrics[run_id].append(
            (r.step, r.episode, r.episode_return, r.normalized_return, r.model_error_fraction) for r in records
        )
        self._timing[run_id].append((r.step, r.update_wall_time) for r in records)
        return len(records)

    def run_ids(self) -> List[str]:
        return sorted(self._metrics)


def write_report(frame: pd.DataFrame, path: str) -> str:
    """Write an aggregated report as UTF-8 CSV with a header row."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", na_rep="")
    logger.info(f"Wrote report {path} ({len(frame)} rows)")
    return path


__all__ = ["MetricsSink", "METRICS_COLUMNS", "TIMING_COLUMNS", "format_value", "write_report"]
