"""Order-preserving process fan-out."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def pmap(fn: Callable[[T], R], jobs: Iterable[T], workers: int = 1) -> list[R]:
    """``[fn(j) for j in jobs]``, optionally across processes.

    Results come back in job order, so callers merge them canonically no
    matter how many workers ran.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))
