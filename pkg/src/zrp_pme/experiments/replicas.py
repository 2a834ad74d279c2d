"""Replica harness: deterministic stream splitting and order-independent aggregation."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


def replica_seeds(seed: int, n: int, key: Sequence[int] = ()) -> list[np.random.SeedSequence]:
    """Child seed sequences for replicas 0..n-1 of the sweep entry `key`."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).spawn(n)


def run_replicas(task: Callable[[int, np.random.Generator], T], n: int, seed: int,
                 threads: int = 1, key: Sequence[int] = ()) -> list[T]:
    """task(index, rng) for every replica; results come back in replica order.

    Each replica owns a generator built from its own child seed, so the output
    does not depend on the thread count or on scheduling.
    """
    seqs = replica_seeds(seed, n, key)

    def one(i: int) -> T:
        return task(i, np.random.default_rng(seqs[i]))

    if threads <= 1:
        return [one(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(n)))


def mean_stderr(values) -> tuple[float, float]:
    """Mean and standard error with exactly rounded (fsum) sums."""
    v = [float(x) for x in values]
    n = len(v)
    if n == 0:
        return math.nan, math.nan
    m = math.fsum(v) / n
    if n == 1:
        return m, math.nan
    var = math.fsum((x - m) ** 2 for x in v) / (n - 1)
    return m, math.sqrt(var / n)


def sample_variance(values) -> float:
    v = [float(x) for x in values]
    m = math.fsum(v) / len(v)
    return math.fsum((x - m) ** 2 for x in v) / (len(v) - 1)
