"""Chunked ensemble execution with worker-count-invariant results.

Path indices are cut into chunks of a fixed size that does not depend on the
number of workers. Each chunk is a pure function of its indices, so the
per-chunk outputs are identical whether they run in-process or in a forked
worker; outputs are concatenated in index order and every reduction happens
afterwards on the full array.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["run_chunked", "mean_stderr", "Stat", "DEFAULT_CHUNK"]

DEFAULT_CHUNK = 64

# the task being run; forked workers inherit it, so closures need no pickling
_ACTIVE: Callable | None = None


def _run_registered(indices: np.ndarray) -> dict:
    return _ACTIVE(indices)


def _chunks(n: int, size: int) -> list[np.ndarray]:
    return [np.arange(i, min(i + size, n)) for i in range(0, n, size)]


def run_chunked(task: Callable[[np.ndarray], dict], n: int, workers: int = 1,
                chunk: int = DEFAULT_CHUNK) -> dict[str, np.ndarray]:
    """Apply ``task`` to index chunks and concatenate its dict outputs along axis 0."""
    global _ACTIVE
    if n <= 0:
        raise ValueError("ensemble size must be positive")
    if workers < 1:
        raise ValueError("worker count must be at least 1")
    parts = _chunks(n, chunk)
    if workers == 1 or len(parts) == 1:
        results = [task(idx) for idx in parts]
    else:
        _ACTIVE = task
        try:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                results = list(pool.map(_run_registered, parts))
        finally:
            _ACTIVE = None
    keys = results[0].keys()
    return {k: np.concatenate([np.asarray(r[k]) for r in results], axis=0) for k in keys}


@dataclass(frozen=True)
class Stat:
    mean: np.ndarray
    stderr: np.ndarray
    n: int

    @property
    def half_width(self) -> np.ndarray:
        return 3.0 * self.stderr


def mean_stderr(values: np.ndarray, axis: int = 0) -> Stat:
    """Sample mean and standard error along ``axis`` (fixed-order numpy reductions)."""
    v = np.asarray(values, dtype=float)
    n = v.shape[axis]
    mean = np.mean(v, axis=axis)
    if n > 1:
        se = np.std(v, axis=axis, ddof=1) / np.sqrt(n)
    else:
        se = np.zeros_like(mean)
    return Stat(mean, se, n)
