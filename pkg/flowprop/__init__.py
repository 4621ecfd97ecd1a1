"""
flowprop - flow-guided feature propagation and memory aggregation for
sparse key-frame video detection, with oracle-checked kernels and a
throughput benchmark harness.
"""

__version__ = "0.1.0"
