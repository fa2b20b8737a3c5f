from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

from app.core.config import settings

T = TypeVar("T")
R = TypeVar("R")


def get_rng(seed: int = 0) -> np.random.Generator:
    """Seeded generator shared by every randomized routine"""
    return np.random.default_rng(seed)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = None) -> List[R]:
    """Map over items, keeping input order regardless of thread count"""
    items = list(items)
    threads = threads or settings.THREADS
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
