# Performance Utilities
from collections import abc
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, List, Sequence, TypeVar
import time

T = TypeVar('T')
R = TypeVar('R')


def map_in_threads(func: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Apply ``func`` to every item, fanning out over a thread pool.

    Results come back in input order whatever the completion order, so
    callers stay deterministic. ``workers <= 1`` runs inline.
    """
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(func, items))


def batch_process(items: Iterable[T], batch_size: int = 100) -> Iterator[Sequence[T]]:
    """Process items in batches

    Sequences are sliced as they are, so a ``range`` yields sub-ranges
    without materialising; other iterables are collected into a list first.
    """
    if not isinstance(items, abc.Sequence):
        items = list(items)
    for i in range(0, len(items), batch_size):
        yield items[i:i + batch_size]


def split_counts(total: int, parts: int) -> List[int]:
    """Split ``total`` into ``parts`` near-equal non-negative integers"""
    base, extra = divmod(int(total), int(parts))
    return [base + (1 if i < extra else 0) for i in range(parts)]


class PerformanceMonitor:
    """Simple performance monitoring"""

    def __init__(self):
        self.metrics = {}

    def start_timer(self, name: str):
        """Start timing an operation"""
        self.metrics[name] = {'start': time.perf_counter()}

    def end_timer(self, name: str) -> float:
        """End timing and return duration"""
        if name in self.metrics:
            duration = time.perf_counter() - self.metrics[name]['start']
            self.metrics[name]['duration'] = duration
            return duration
        return 0.0

    def get_metrics(self) -> dict:
        """Get all performance metrics"""
        return self.metrics.copy()
