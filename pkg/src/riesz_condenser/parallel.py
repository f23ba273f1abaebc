"""Deterministic data parallelism for dense kernel work.

Rows are always split into chunks of the same fixed size, whatever the
thread count, and each chunk is reduced by a single-threaded BLAS call.
The thread count therefore changes only scheduling, never the floating
point evaluation order, so results are bit-identical across thread counts.
"""
from __future__ import annotations

import contextlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np
from threadpoolctl import threadpool_limits

ROW_CHUNK = 256
THREADS_ENV = "RIESZ_THREADS"

_threads = None


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def get_threads() -> int:
    return _threads if _threads is not None else resolve_threads()


@contextlib.contextmanager
def thread_scope(threads: Optional[int] = None):
    """Set the worker count and pin BLAS to one thread for the duration."""
    global _threads
    prev = _threads
    _threads = resolve_threads(threads)
    try:
        with threadpool_limits(limits=1, user_api="blas"):
            yield _threads
    finally:
        _threads = prev


def chunk_bounds(n_rows: int, chunk: int = ROW_CHUNK):
    return [(s, min(s + chunk, n_rows)) for s in range(0, n_rows, chunk)]


def map_chunks(fn: Callable[[int, int], None], n_rows: int) -> None:
    """Run ``fn(start, stop)`` over fixed row chunks, possibly concurrently."""
    bounds = chunk_bounds(n_rows)
    nt = get_threads()
    if nt == 1 or len(bounds) == 1:
        for s, e in bounds:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=nt) as pool:
        list(pool.map(lambda b: fn(*b), bounds))


def matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    out = np.empty(mat.shape[0])

    def work(s, e):
        out[s:e] = mat[s:e] @ vec

    map_chunks(work, mat.shape[0])
    return out
