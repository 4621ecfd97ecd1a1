"""Nanosecond stage timers shared by the pipeline and the benchmark."""
import statistics
import time
from contextlib import contextmanager


@contextmanager
def stage(timings, name):
    """Add the wall time of the block to timings[name] (ns). timings=None disables timing."""
    start = time.perf_counter_ns()
    try:
        yield
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0) + time.perf_counter_ns() - start


def median_ns(samples):
    samples = list(samples)
    return float(statistics.median(samples)) if samples else 0.0


def format_duration(elapsed_s):
    """'1m 5s' above a minute, '3.2s' below."""
    minutes, seconds = divmod(int(elapsed_s), 60)
    if minutes > 0:
        return f"{minutes}m {seconds}s"
    return f"{elapsed_s:.1f}s"
