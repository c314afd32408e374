"""Order-preserving map over a process pool."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence


def pmap(fn: Callable, items: Sequence, workers: int = 1, chunksize: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally over ``workers`` processes.

    Results come back in input order, so any reduction over them is
    independent of the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))


def batched(n: int, size: int) -> Iterable[range]:
    for start in range(0, n, size):
        yield range(start, min(n, start + size))
