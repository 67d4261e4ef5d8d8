"""Evaluation utilities shared by the experiment runners and reports.

Functions:
  mse(predictions, targets) -> float
  mean_stderr(values) -> (mean, stderr)
  summarize_runs(frame, group_cols, value_col) -> DataFrame
  relative_gap(a, b) -> float
  final_window_mean(values, fraction) -> float
  learning_curve_auc(steps, values, budget) -> float

Expectations:
  - predictions/targets: arrays of equal shape; the mean runs over every element.
  - stderr uses the sample standard deviation (ddof=1) over sqrt(n); a single
    value has stderr 0.
"""
from __future__ import annotations

import math
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from backend.core.errors import ShapeError


def mse(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ShapeError(f"prediction shape {predictions.shape} != target shape {targets.shape}")
    if predictions.size == 0:
        return 0.0
    return float(np.mean((predictions - targets) ** 2))


def mean_stderr(values: Iterable[float]) -> Tuple[float, float]:
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def summarize_runs(frame: pd.DataFrame, group_cols: Sequence[str], value_col: str) -> pd.DataFrame:
    """Mean, standard error and count of `value_col` per group, sorted by the group keys."""
    rows = []
    for key, series in frame.groupby(list(group_cols), sort=True)[value_col]:
        key = key if isinstance(key, tuple) else (key,)
        m, se = mean_stderr(series.dropna())
        rows.append({**dict(zip(group_cols, key)), "mean": m, "stderr": se, "n": int(series.notna().sum())})
    return pd.DataFrame(rows, columns=[*group_cols, "mean", "stderr", "n"])


def relative_gap(a: float, b: float) -> float:
    # |a - b| / max(|a|, |b|); 0 when both are zero
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def final_window_mean(values: List[float], fraction: float = 0.1) -> float:
    """Mean over the trailing `fraction` of a learning curve."""
    if not values:
        return math.nan
    n = max(1, int(math.ceil(len(values) * fraction)))
    return float(np.mean(values[-n:]))


def learning_curve_auc(steps: Sequence[int], values: Sequence[float], budget: int) -> float:
    """Area under a step-indexed learning curve, divided by the step budget.

    Each episode's value holds from the step it ended until the next episode
    ends (or the budget runs out); the curve is 0 before the first episode ends.
    """
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    steps = np.asarray(steps, dtype=float)
    values = np.asarray(values, dtype=float)
    if steps.shape != values.shape or steps.ndim != 1:
        raise ShapeError(f"steps {steps.shape} and values {values.shape} must be matching 1-d arrays")
    if steps.size == 0:
        return 0.0
    if np.any(np.diff(steps) < 0):
        raise ValueError("episode end steps must be non-decreasing")
    ends = np.minimum(np.append(steps[1:], budget), budget)
    widths = np.clip(ends - np.minimum(steps, budget), 0.0, None)
    return float(np.dot(values, widths) / budget)


__all__ = ["mse", "mean_stderr", "summarize_runs", "relative_gap", "final_window_mean", "learning_curve_auc"]
