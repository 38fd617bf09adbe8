"""Peak-allocation metering built on tracemalloc.

tracemalloc sees every allocation made through the Python allocator,
which includes numpy array buffers, so the peaks reported here are exact
byte counts for array workloads rather than RSS estimates. Interpreter
warm-up (module import caches, first-call buffers) shows up in the first
measured run of a workload; callers that need run-to-run identical peaks
should execute one small warm-up pass before measuring.
"""

from __future__ import annotations

import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable

__all__ = ["PeakReport", "measure_peak", "track_peak"]


@dataclass
class PeakReport:
    """Peak bytes allocated above the baseline inside a tracked block."""

    baseline_bytes: int = 0
    peak_bytes: int = 0


@contextmanager
def track_peak():
    """Context manager that yields a PeakReport filled in on exit.

    The report's ``peak_bytes`` is the high-water mark of allocations made
    inside the block, measured above the allocation level at entry. If
    tracemalloc was already tracing, the surrounding trace is left
    running; otherwise tracing stops on exit.
    """
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    baseline, _ = tracemalloc.get_traced_memory()
    tracemalloc.reset_peak()
    report = PeakReport(baseline_bytes=baseline)
    try:
        yield report
    finally:
        _, peak = tracemalloc.get_traced_memory()
        report.peak_bytes = max(peak - baseline, 0)
        if not was_tracing:
            tracemalloc.stop()


def measure_peak(fn: Callable[[], object]) -> tuple[object, int]:
    """Run ``fn`` and return (result, peak bytes allocated while it ran)."""
    with track_peak() as report:
        result = fn()
    return result, report.peak_bytes
