"""Process-pool map over path indices with results in index order."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Iterable


def resolve_workers(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return threads


def map_paths(fn: Callable, indices: Iterable[int], workers: int | None, *args, **kwargs) -> list:
    """[fn(*args, index, **kwargs) for index in indices], possibly in parallel.

    ``fn`` receives the index as the argument right after ``args``.  Output
    order follows ``indices`` regardless of scheduling, so any reduction
    over the result is independent of the worker count.
    """
    indices = list(indices)
    workers = resolve_workers(workers)
    call = partial(_apply, fn, args, kwargs)
    if workers == 1 or len(indices) <= 1:
        return [call(i) for i in indices]
    chunk = max(1, len(indices) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(call, indices, chunksize=chunk))


def _apply(fn, args, kwargs, index):
    return fn(*args, index, **kwargs)
