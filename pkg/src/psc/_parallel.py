"""Order-preserving map over worker processes, capped by ``PSC_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits


def worker_count() -> int:
    raw = os.environ.get("PSC_THREADS")
    if raw is None or raw.strip() == "":
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PSC_THREADS must be a positive integer, got {raw!r}") from None
    return max(1, n)


def _init_worker():
    # single-threaded BLAS keeps reductions identical regardless of worker count
    threadpool_limits(1)


def pmap(func, items, workers: int | None = None) -> list:
    items = list(items)
    workers = worker_count() if workers is None else workers
    workers = min(workers, len(items))
    if workers <= 1:
        with threadpool_limits(1):
            return [func(it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as ex:
        return list(ex.map(func, items, chunksize=chunk))


def sub_seed(seed: int, index: int) -> int:
    """Deterministic 63-bit seed for replicate ``index``, independent of execution order."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]).generate_state(2, np.uint32)
    return int(state[0]) << 31 ^ int(state[1])
