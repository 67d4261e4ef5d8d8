"""Static SVG learning curves from metrics CSVs.

Public API:
  read_metrics_csv(path) -> DataFrame
  learning_curve_bands(paths, points) -> DataFrame[arm, step, mean, stderr, n]
  plot_learning_curves(paths, out_svg) -> DataFrame
  wall_clock_series(metrics_paths, timing_dir) -> DataFrame
  plot_wall_clock(series, out_svg)

Edge Guards:
  - Malformed CSV (missing columns, ragged rows, non-numeric cells) raises
    MetricsParseError with the 1-based line number.
  - Plot output depends only on the CSV inputs: the SVG hash salt is fixed
    and the date metadata dropped, so re-plotting is byte-identical.
  - Arm and seed come from the run id in the file name; files whose name is
    not a run id are grouped under their stem with seed 0.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from typing import Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from backend.core.errors import MetricsParseError  # noqa: E402
from backend.core.evaluation import mean_stderr  # noqa: E402
from backend.core.identifiers import parse_run_id  # noqa: E402
from backend.storage.metrics_sink import METRICS_COLUMNS, TIMING_COLUMNS  # noqa: E402

logger = logging.getLogger(__name__)

_SVG_RC = {"svg.hashsalt": "losse-ftl", "svg.fonttype": "path"}


def _validate_csv(path: str, required: Sequence[str]) -> None:
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise MetricsParseError(f"{path}: empty file", 1)
        missing = [c for c in required if c not in header]
        if missing:
            raise MetricsParseError(f"{path}: missing columns {missing}", 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise MetricsParseError(f"{path}: expected {len(header)} fields, got {len(row)}", line)
            for name, cell in zip(header, row):
                if cell == "":
                    continue
                try:
                    float(cell)
                except ValueError:
                    raise MetricsParseError(f"{path}: non-numeric value {cell!r} in column '{name}'", line) from None


def read_metrics_csv(path: str, required: Sequence[str] = METRICS_COLUMNS) -> pd.DataFrame:
    _validate_csv(path, required)
    return pd.read_csv(path, dtype=float)


def _arm_seed(path: str):
    stem = os.path.splitext(os.path.basename(path))[0]
    try:
        _, arm, seed = parse_run_id(stem)
    except ValueError:
        return stem, 0
    return arm, seed


def _curve_on_grid(frame: pd.DataFrame, grid: np.ndarray, column: str) -> np.ndarray:
    # value of the most recent finished episode at each grid step, NaN before the first
    steps = frame["step"].to_numpy()
    values = frame[column].to_numpy()
    pos = np.searchsorted(steps, grid, side="right") - 1
    out = np.full(grid.shape, np.nan)
    ok = pos >= 0
    out[ok] = values[pos[ok]]
    return out


def learning_curve_bands(paths: Iterable[str], points: int = 100, column: str = "normalized_return") -> pd.DataFrame:
    by_arm: Dict[str, List[pd.DataFrame]] = {}
    for path in sorted(paths):
        arm, _ = _arm_seed(path)
        by_arm.setdefault(arm, []).append(read_metrics_csv(path))
    rows = []
    for arm in sorted(by_arm):
        frames = by_arm[arm]
        last = max((float(f["step"].max()) for f in frames if len(f)), default=0.0)
        if last <= 0:
            logger.warning(f"Arm '{arm}' has no finished episodes; skipping")
            continue
        grid = np.linspace(last / points, last, points)
        curves = np.vstack([_curve_on_grid(f, grid, column) for f in frames])
        for j, step in enumerate(grid):
            m, se = mean_stderr(curves[~np.isnan(curves[:, j]), j])
            rows.append({"arm": arm, "step": float(step), "mean": m, "stderr": se,
                         "n": int((~np.isnan(curves[:, j])).sum())})
    return pd.DataFrame(rows, columns=["arm", "step", "mean", "stderr", "n"])


def _save_svg(fig, out_svg: str) -> str:
    os.makedirs(os.path.dirname(out_svg) or ".", exist_ok=True)
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote plot {out_svg}")
    return out_svg


def plot_learning_curves(paths: Iterable[str], out_svg: str, column: str = "normalized_return",
                         title: Optional[str] = None, points: int = 100) -> pd.DataFrame:
    """Mean curve with a shaded ±1 standard-error band per arm."""
    bands = learning_curve_bands(paths, points=points, column=column)
    with matplotlib.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(7, 4))
        for arm, band in bands.groupby("arm", sort=True):
            x = band["step"].to_numpy()
            m = band["mean"].to_numpy()
            se = np.nan_to_num(band["stderr"].to_numpy())
            ax.plot(x, m, label=arm)
            ax.fill_between(x, m - se, m + se, alpha=0.2)
        ax.set_xlabel("environment steps")
        ax.set_ylabel(column.replace("_", " "))
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        _save_svg(fig, out_svg)
    return bands


def wall_clock_series(metrics_paths: Iterable[str], timing_dir: str) -> pd.DataFrame:
    """Cumulative model-update seconds against normalized return, per run.

    Timing rows hold the mean per-transition update time since the previous
    episode end, so the spent time per episode is that mean times the episode length.
    """
    rows = []
    for path in sorted(metrics_paths):
        arm, seed = _arm_seed(path)
        metrics = read_metrics_csv(path)
        timing = read_metrics_csv(os.path.join(timing_dir, os.path.basename(path)), TIMING_COLUMNS)
        if len(metrics) != len(timing):
            raise MetricsParseError(f"{path}: {len(metrics)} metrics rows but {len(timing)} timing rows",
                                    min(len(metrics), len(timing)) + 2)
        lengths = np.diff(np.concatenate([[0.0], metrics["step"].to_numpy()]))
        spent = np.cumsum(timing["update_wall_time"].fillna(0.0).to_numpy() * lengths)
        for step, seconds, ret in zip(metrics["step"], spent, metrics["normalized_return"]):
            rows.append({"arm": arm, "seed": seed, "step": step, "cumulative_update_seconds": seconds,
                         "normalized_return": ret})
    return pd.DataFrame(rows, columns=["arm", "seed", "step", "cumulative_update_seconds", "normalized_return"])


def plot_wall_clock(series: pd.DataFrame, out_svg: str, title: Optional[str] = None) -> str:
    with matplotlib.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(7, 4))
        for arm, group in series.groupby("arm", sort=True):
            for i, (_, run) in enumerate(group.groupby("seed", sort=True)):
                ax.plot(run["cumulative_update_seconds"], run["normalized_return"], alpha=0.4,
                        color=f"C{sorted(series['arm'].unique()).index(arm)}", label=arm if i == 0 else None)
        ax.set_xlabel("cumulative model update time (s)")
        ax.set_ylabel("normalized return")
        if title:
            ax.set_title(title)
        if len(series):
            ax.legend()
        fig.tight_layout()
        return _save_svg(fig, out_svg)


def update_time_ratio(timing_paths: Iterable[str], early=(0.1, 0.2), late=(0.8, 0.9)) -> float:
    """Late-window over early-window mean update time (windows as fractions of the run)."""
    ratios = []
    for path in timing_paths:
        frame = read_metrics_csv(path, TIMING_COLUMNS).dropna()
        frame = frame[frame["update_wall_time"] > 0]
        if len(frame) < 10:
            continue
        last = frame["step"].max()

        def window(lo, hi):
            sel = frame[(frame["step"] > lo * last) & (frame["step"] <= hi * last)]
            return float(sel["update_wall_time"].mean()) if len(sel) else math.nan

        e, l = window(*early), window(*late)
        if e > 0 and not math.isnan(l):
            ratios.append(l / e)
    return float(np.median(ratios)) if ratios else math.nan


__all__ = [
    "read_metrics_csv",
    "learning_curve_bands",
    "plot_learning_curves",
    "wall_clock_series",
    "plot_wall_clock",
    "update_time_ratio",
]
