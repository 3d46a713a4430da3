"""Deterministic task-parallel map.

Results are always returned in input order, and tasks receive their own
seed derived from ``(seed, index)``, so the worker count never changes
the output.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np


def task_seed(seed: int, index: int) -> int:
    """Independent 63-bit seed for task ``index``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)[0] >> 1)


def pmap(fn: Callable, items: Sequence | Iterable, workers: int = 1) -> list:
    """``[fn(item) for item in items]``, optionally across processes."""
    items = list(items)
    workers = max(1, int(workers))
    if workers == 1 or len(items) <= 1 or os.environ.get("ZEROLAP_SERIAL"):
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))
