"""Deterministic chunked Monte Carlo plumbing.

Every estimator draws its randomness through per-chunk generators derived
from (seed, chunk index), and partial results are reduced in chunk order.
The output is therefore bit-identical for a fixed (seed, n, chunk size)
regardless of how many workers execute the chunks.

The worker count comes from the ``STEINMAL_WORKERS`` environment variable
(default 1); chunks are dispatched to a thread pool when it exceeds one.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CHUNK_SIZE",
    "worker_count",
    "chunk_rng",
    "chunk_sizes",
    "map_chunks",
    "MeanAccumulator",
    "GaussianSampler",
]

CHUNK_SIZE = 16384
WORKERS_ENV = "STEINMAL_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be positive, got {n}")
    return n


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Independent stream for one (seed, chunk index) pair."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(chunk,)))


def chunk_sizes(n: int, chunk_size: int = CHUNK_SIZE) -> list:
    if n < 1:
        raise ValueError("need at least one sample")
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(task: Callable[[int, int], object], sizes: Sequence[int]):
    """Run task(chunk_index, chunk_n) for each chunk; results in chunk order.

    Execution may be parallel (thread pool) but the returned list order, and
    hence any ordered reduction over it, never depends on the worker count.
    """
    workers = worker_count()
    if workers == 1 or len(sizes) == 1:
        return [task(i, c) for i, c in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task, i, c) for i, c in enumerate(sizes)]
        return [f.result() for f in futures]


class MeanAccumulator:
    """Exact-order accumulation of first and second moments."""

    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        self.n += values.size
        self.s1 += float(values.sum())
        self.s2 += float((values * values).sum())

    @property
    def mean(self) -> float:
        return self.s1 / self.n

    @property
    def std_error(self) -> float:
        if self.n < 2:
            return float("inf")
        var = max(self.s2 / self.n - self.mean**2, 0.0) * self.n / (self.n - 1)
        return float(np.sqrt(var / self.n))


@dataclass(frozen=True)
class GaussianSampler:
    """Deterministic i.i.d. standard-normal matrix sampler.

    ``sample(n)`` assembles per-chunk blocks generated from (seed, chunk);
    the result is identical across worker counts.
    """

    dimension: int
    seed: int
    chunk_size: int = CHUNK_SIZE

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")

    def sample(self, n: int) -> np.ndarray:
        sizes = chunk_sizes(n, self.chunk_size)

        def task(i, c):
            return chunk_rng(self.seed, i).standard_normal((c, self.dimension))

        blocks = map_chunks(task, sizes)
        return np.vstack(blocks)
