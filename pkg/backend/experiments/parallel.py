"""Fan-out of independent (seed, arm) tasks over worker processes.

Tasks must be module-level callables with picklable arguments. Results come
back in submission order regardless of completion order, so reports built
from them do not depend on scheduling.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)


def default_workers() -> int:
    return os.cpu_count() or 1


def run_tasks(fn: Callable[..., Any], tasks: Sequence[Mapping[str, Any]], workers: Optional[int] = None) -> List[Any]:
    """Call fn(**task) for every task; one worker runs inline."""
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    workers = min(workers, max(len(tasks), 1))
    logger.info(f"Running {len(tasks)} tasks of {getattr(fn, '__name__', fn)} on {workers} worker(s)")
    if workers == 1:
        return [fn(**task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(fn, **task) for task in tasks]
        return [future.result() for future in futures]


__all__ = ["default_workers", "run_tasks"]
