"""Bounded worker pool over independent simulation jobs.

Results are gathered in task order, so a run is deterministic for any
worker count.  Workers are forked processes (the jobs are numpy-heavy and
release little GIL time in the sparse kernels).
"""

from __future__ import annotations

import multiprocessing as mp
import os


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def _limit_worker_threads():
    # one numba thread per pool worker; the pool owns the core-level parallelism
    try:
        import numba
        numba.set_num_threads(1)
    except ImportError:      # pragma: no cover
        pass


def parallel_map(fn, tasks, n_workers: int | None = None):
    """Map fn over tasks; order-preserving; serial when n_workers <= 1."""
    tasks = list(tasks)
    if n_workers is None:
        n_workers = default_workers()
    n_workers = min(n_workers, len(tasks)) if tasks else 1
    if n_workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=n_workers, initializer=_limit_worker_threads) as pool:
        return pool.map(fn, tasks, chunksize=1)
