import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "ENSAUDIT_THREADS"


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        n = min(8, os.cpu_count() or 1)
    return n


def ordered_map(fn, items):
    """Map in a thread pool; results come back in input order."""
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one task, keyed by (seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
