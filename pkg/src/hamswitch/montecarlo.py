"""Deterministic parallel ensembles with index-addressed random streams.

Every path owns a counter-based Philox stream keyed by ``(seed, index)``, so
a path's randomness does not depend on how paths are grouped into blocks or
distributed over worker processes.  Path results are stored by index and
reduced with :func:`math.fsum` (exactly rounded), which makes reports
bitwise independent of the worker count.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import multiprocessing as mp
from typing import Callable

import numpy as np

__all__ = [
    "Comparison",
    "EstimateReport",
    "compare_estimates",
    "ensemble_values",
    "estimate",
    "per_path",
    "resolve_workers",
    "rng_stream",
    "run_ensemble",
]

THREADS_ENV = "HAMSWITCH_THREADS"
DEFAULT_BLOCK = 2048
_MASK64 = (1 << 64) - 1

# substreams of one path
BROWNIAN, CHAIN, AUX = 0, 1, 2


def rng_stream(seed: int, index: int, substream: int = 0) -> np.random.Generator:
    """Reproducible generator for path ``index`` under ``seed``.

    Philox-4x64 with key ``(index, seed)``; ``substream`` selects a disjoint
    counter range (2^192 draws apart).  Normals use numpy's ziggurat, uniforms
    the 53-bit mantissa construction; both are platform independent.
    """
    key = np.array([int(index) & _MASK64, int(seed) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(substream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class EstimateReport:
    mean: float
    stderr: float
    n: int
    min: float
    max: float
    seed: int | None = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - 3 * self.stderr, self.mean + 3 * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n, "min": self.min,
                "max": self.max, "seed": self.seed}


def estimate(values, seed: int | None = None, wall_time: float = 0.0) -> EstimateReport:
    """Mean and standard error ``s / sqrt(N)`` of a sample, order independent."""
    v = np.asarray(values, dtype=float).ravel()
    n = len(v)
    if n == 0:
        raise ValueError("cannot estimate from an empty sample")
    mean = math.fsum(v) / n
    if n >= 2:
        var = math.fsum((v - mean) ** 2) / (n - 1)
        se = math.sqrt(var / n)
    else:
        se = float("nan")
    return EstimateReport(mean, se, n, float(v.min()), float(v.max()), seed, wall_time)


@dataclass(frozen=True)
class Comparison:
    z: float
    passed: bool
    difference: float
    combined_stderr: float

    def to_dict(self) -> dict:
        return {"z": self.z, "passed": self.passed, "difference": self.difference,
                "combined_stderr": self.combined_stderr}


def compare_estimates(r1: EstimateReport, r2: EstimateReport, threshold: float = 3.0) -> Comparison:
    """Two-sample z-score ``(m1 - m2) / sqrt(se1^2 + se2^2)`` with a ``|z| <= threshold`` verdict."""
    diff = r1.mean - r2.mean
    se = math.sqrt(r1.stderr ** 2 + r2.stderr ** 2)
    if se == 0.0:
        if diff == 0.0:
            return Comparison(0.0, True, 0.0, 0.0)
        return Comparison(math.copysign(math.inf, diff), False, diff, 0.0)
    z = diff / se
    return Comparison(z, abs(z) <= threshold, diff, se)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(int(workers), 1)


# Task handed to forked workers through module state, so closures need no pickling.
_TASK: Callable | None = None


def _run_block(args):
    seed, lo, hi = args
    return lo, np.asarray(_TASK(seed, np.arange(lo, hi)), dtype=float)


def ensemble_values(task: Callable, N: int, seed: int, workers: int | None = None,
                    block_size: int = DEFAULT_BLOCK) -> np.ndarray:
    """Evaluate ``task(seed, indices)`` over path indices ``0..N-1``.

    ``task`` returns one row per index (shape ``(len(indices),)`` or
    ``(len(indices), m)``).  Blocks are fixed by ``block_size`` alone; the
    result is identical for any ``workers``.
    """
    global _TASK
    if N < 1:
        raise ValueError("need at least one path")
    workers = resolve_workers(workers)
    blocks = [(seed, lo, min(lo + block_size, N)) for lo in range(0, N, block_size)]
    _TASK = task
    try:
        if workers == 1 or len(blocks) == 1:
            parts = [_run_block(b) for b in blocks]
        else:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                parts = list(pool.map(_run_block, blocks))
    finally:
        _TASK = None
    parts.sort(key=lambda p: p[0])
    return np.concatenate([p[1] for p in parts], axis=0)


def per_path(fn: Callable[[np.random.Generator, int], float]) -> Callable:
    """Adapt a per-path function ``fn(rng, index)`` to the block task protocol."""
    def task(seed, indices):
        return np.array([fn(rng_stream(seed, i), int(i)) for i in indices], dtype=float)
    return task


def run_ensemble(task: Callable, N: int, seed: int, workers: int | None = None,
                 block_size: int = DEFAULT_BLOCK, column: int | None = None):
    """Mean and standard error of a block task over ``N`` paths.

    Multi-column tasks yield one report per column unless ``column`` picks one.
    """
    t0 = time.perf_counter()
    vals = ensemble_values(task, N, seed, workers, block_size)
    wall = time.perf_counter() - t0
    if vals.ndim == 1:
        return estimate(vals, seed, wall)
    if column is not None:
        return estimate(vals[:, column], seed, wall)
    return [estimate(vals[:, j], seed, wall) for j in range(vals.shape[1])]
