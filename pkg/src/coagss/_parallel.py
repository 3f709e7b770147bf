"""Thread fan-out with a fixed result order.

Work is split into contiguous index chunks; each chunk is computed
independently and the results are concatenated in index order, so the
output does not depend on how many threads ran.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

ENV_THREADS = "COAGSS_THREADS"


def thread_count() -> int:
    raw = os.environ.get(ENV_THREADS, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def map_indices(func, n: int, threads: int | None = None) -> np.ndarray:
    """Evaluate ``func(i)`` for ``i in range(n)`` and return the stacked results."""
    threads = thread_count() if threads is None else max(1, threads)
    if threads == 1 or n < 2 * threads:
        return np.array([func(i) for i in range(n)])
    bounds = np.linspace(0, n, threads + 1).astype(int)

    def run(k):
        return [func(i) for i in range(bounds[k], bounds[k + 1])]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(run, range(threads)))
    return np.array([r for part in parts for r in part])
