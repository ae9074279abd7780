"""Deterministic parallel mapping for independent eigen-solves.

Results are collected in input order, so worker count never changes the
output (each item's computation is a pure function of its input).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_WORKERS = "THERMOFORMAL_WORKERS"


def worker_count(default=1):
    raw = os.environ.get(ENV_WORKERS, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def ordered_map(fn, items, workers=1):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
