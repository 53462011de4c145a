"""Pixel-chunked evaluation with a fixed chunk layout.

Per-pixel work is split into chunks whose boundaries depend only on ``n``;
chunk outputs are concatenated in chunk order and every reduction over
pixels happens afterwards on the full array.  Results are therefore
bit-identical for any worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SIZE = 16384
ENV_THREADS = "DARKMIX_THREADS"


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get(ENV_THREADS, "1")
    try:
        threads = int(threads)
    except (TypeError, ValueError):
        raise ValueError(f"thread count must be an integer, got {threads!r}")
    return max(1, threads)


def chunk_slices(n, size=CHUNK_SIZE):
    return [slice(i, min(i + size, n)) for i in range(0, n, size)] or [slice(0, 0)]


def map_chunks(fn, n, threads=None):
    """Apply ``fn(slice)`` over the fixed chunks; return outputs in chunk order."""
    slices = chunk_slices(n)
    threads = resolve_threads(threads)
    if threads == 1 or len(slices) == 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, slices))


def concat_chunks(parts):
    """Concatenate chunk outputs; tuples are concatenated field-wise."""
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)
