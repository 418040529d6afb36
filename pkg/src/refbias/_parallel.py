"""Reproducible parallel map: results depend on task keys, never on scheduling."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for one task, fixed by the master seed and the task's keys."""
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def pmap(fn: Callable, items: Sequence, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("REFBIAS_THREADS", "1")))
    except ValueError:
        return 1
