"""Fixed-chunk parallel map.

Work is cut into chunks whose size does not depend on the worker count, and
every chunk draws from its own split of the randomness handle, so results are
identical for any number of workers.  Kernels release the GIL, so threads
suffice.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def chunk_bounds(n: int, chunk: int):
    return [(i, min(n, i + chunk)) for i in range(0, n, chunk)]


def map_chunks(fn, n: int, chunk: int, workers: int | None = None):
    """[fn(index, start, stop) for each chunk], in chunk order."""
    bounds = chunk_bounds(n, chunk)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(bounds) <= 1:
        return [fn(i, a, b) for i, (a, b) in enumerate(bounds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, i, a, b) for i, (a, b) in enumerate(bounds)]
        return [f.result() for f in futures]
