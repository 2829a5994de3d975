#!/usr/bin/env python3
"""
Test suite for performance utilities
"""

import pytest
import os
import sys
import threading
import time

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from src.utils.performance import map_in_threads, batch_process, split_counts, PerformanceMonitor


class TestMapInThreads:
    """Test cases for map_in_threads function"""

    def test_results_keep_input_order(self):
        """Later items finishing first must not reorder results"""
        def slow_square(x):
            time.sleep(0.01 * (5 - x))
            return x * x

        assert map_in_threads(slow_square, [0, 1, 2, 3, 4], workers=5) == [0, 1, 4, 9, 16]

    def test_single_worker_runs_inline(self):
        """workers=1 stays on the calling thread"""
        threads = map_in_threads(lambda _: threading.get_ident(), [1, 2, 3], workers=1)
        assert set(threads) == {threading.get_ident()}

    def test_serial_and_threaded_agree(self):
        """Same inputs, same outputs whatever the worker count"""
        items = list(range(12))
        assert map_in_threads(str, items, 1) == map_in_threads(str, items, 4)

    def test_empty_input(self):
        """Empty input returns an empty list"""
        assert map_in_threads(str, [], workers=3) == []

    def test_exceptions_propagate(self):
        """A failing item surfaces to the caller"""
        def fail_on_two(x):
            if x == 2:
                raise ValueError('boom')
            return x

        with pytest.raises(ValueError):
            map_in_threads(fail_on_two, [1, 2, 3], workers=2)


class TestSplitCounts:
    """Test cases for split_counts function"""

    def test_even_split(self):
        assert split_counts(12, 4) == [3, 3, 3, 3]

    def test_remainder_goes_first(self):
        """Leftover units go to the leading parts"""
        assert split_counts(10, 4) == [3, 3, 2, 2]
        assert sum(split_counts(1_000_003, 8)) == 1_000_003

    def test_more_parts_than_total(self):
        assert split_counts(2, 5) == [1, 1, 0, 0, 0]


class TestBatchProcess:
    """Test cases for batch_process function"""

    def test_batch_process_basic(self):
        """Test basic batch processing"""
        items = list(range(10))
        batches = list(batch_process(items, batch_size=3))

        assert len(batches) == 4
        assert batches[0] == [0, 1, 2]
        assert batches[3] == [9]

    def test_batch_process_empty(self):
        """Test batch processing with empty list"""
        assert list(batch_process([], batch_size=5)) == []

    def test_batch_process_generator_input(self):
        """Generators are materialised before batching"""
        batches = list(batch_process((i for i in range(5)), batch_size=2))
        assert batches == [[0, 1], [2, 3], [4]]

    def test_batch_process_range_stays_lazy(self):
        """A range is chunked into sub-ranges covering it exactly"""
        spans = list(batch_process(range(45_000), batch_size=20_000))
        assert spans == [range(0, 20_000), range(20_000, 40_000), range(40_000, 45_000)]
        assert sum(len(span) for span in spans) == 45_000


class TestPerformanceMonitor:
    """Test cases for PerformanceMonitor class"""

    def test_performance_monitor_basic(self):
        """Test basic performance monitoring"""
        monitor = PerformanceMonitor()

        monitor.start_timer("epoch")
        time.sleep(0.05)
        duration = monitor.end_timer("epoch")

        assert duration >= 0.05
        assert "epoch" in monitor.get_metrics()

    def test_performance_monitor_end_without_start(self):
        """Test ending timer without starting it"""
        monitor = PerformanceMonitor()

        assert monitor.end_timer("nonexistent") == 0.0

    def test_performance_monitor_restart(self):
        """Starting a timer again resets it"""
        monitor = PerformanceMonitor()

        monitor.start_timer("check")
        time.sleep(0.05)
        monitor.end_timer("check")
        monitor.start_timer("check")
        assert "duration" not in monitor.get_metrics()["check"]
        assert monitor.end_timer("check") < 0.05


if __name__ == "__main__":
    pytest.main([__file__])
