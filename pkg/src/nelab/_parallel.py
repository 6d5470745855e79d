"""Fixed-chunk thread parallelism for per-triangle kernels.

Work is always cut into chunks of ``CHUNK`` items regardless of the thread
count, and results are returned in chunk order.  Every element therefore goes
through the same code path at any thread count, which keeps downstream
reductions bit-identical.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 512

_threads = 1
_pool: ThreadPoolExecutor | None = None


def set_threads(n: int | None) -> None:
    global _threads, _pool
    n = (os.cpu_count() or 1) if n is None else int(n)
    if n < 1:
        raise ValueError("thread count must be positive")
    if _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None
    _threads = n


def get_threads() -> int:
    return _threads


def map_chunks(fn, n_items: int) -> list:
    """Apply ``fn(slice)`` to consecutive ``CHUNK``-sized slices of ``range(n_items)``."""
    global _pool
    slices = [slice(i, min(i + CHUNK, n_items)) for i in range(0, n_items, CHUNK)]
    if _threads == 1 or len(slices) < 2:
        return [fn(s) for s in slices]
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_threads)
    return list(_pool.map(fn, slices))
