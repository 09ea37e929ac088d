"""Deterministic chunked parallelism.

Work is always split into fixed-size blocks so that the arithmetic performed
on each block does not depend on the worker count; MANIFOLD_SEG_THREADS only
controls how many blocks run concurrently. Outputs therefore stay bitwise
identical for any thread setting.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

DEFAULT_BLOCK = 256


def thread_count() -> int:
    """Worker count from MANIFOLD_SEG_THREADS (0 or unset = auto)."""
    raw = os.environ.get("MANIFOLD_SEG_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def iter_blocks(n: int, block: int = DEFAULT_BLOCK):
    """Yield (start, stop) pairs covering range(n) in fixed-size blocks."""
    for start in range(0, n, block):
        yield start, min(start + block, n)


def map_blocks(fn, n: int, block: int = DEFAULT_BLOCK) -> list:
    """Apply ``fn(start, stop)`` over fixed blocks of range(n).

    Results are returned in block order. ``fn`` must write only to rows
    [start, stop) of any shared output array.
    """
    spans = list(iter_blocks(n, block))
    workers = thread_count()
    if workers == 1 or len(spans) <= 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, a, b) for a, b in spans]
        return [f.result() for f in futures]
