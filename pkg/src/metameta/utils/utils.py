from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    threads: Optional[int] = 1,
    processes: bool = False,
) -> List[R]:
    """
    Map over items in a bounded worker pool; results keep input order, so the
    worker count never changes what is returned.

    `processes=True` runs workers in separate processes; `fn` and the items must
    then be picklable.
    """
    items = list(items)
    if not threads or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    executor = ProcessPoolExecutor if processes else ThreadPoolExecutor
    with executor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def array_digest(*arrays: np.ndarray) -> str:
    """Stable content hash of float arrays (shape and bytes)."""
    h = hashlib.sha1()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode("ascii"))
        h.update(str(a.dtype).encode("ascii"))
        h.update(a.tobytes())
    return h.hexdigest()


def modal_value(values: Sequence[int], n_values: int) -> int:
    """Most frequent value in range(n_values); ties go to the lowest value."""
    counts = np.bincount(np.asarray(values, dtype=np.int64), minlength=n_values)
    return int(np.argmax(counts))
