"""Fixed-size replica blocks, optionally spread over worker processes.

Blocks depend only on the replica indices, never on the worker count, so
results are identical for every ``jobs`` value.
"""

from concurrent.futures import ProcessPoolExecutor

import numpy as np


def blocks(replicas, chunk):
    replicas = list(replicas)
    return [replicas[a:a + chunk] for a in range(0, len(replicas), chunk)]


def map_blocks(fn, replicas, chunk=1000, jobs=1):
    """[fn(block) for block in blocks(replicas, chunk)], in order."""
    parts = blocks(replicas, chunk)
    if jobs <= 1 or len(parts) <= 1:
        return [fn(b) for b in parts]
    with ProcessPoolExecutor(max_workers=min(jobs, len(parts))) as pool:
        return list(pool.map(fn, parts))


def concat(parts, axis=0):
    return np.concatenate(parts, axis=axis)
