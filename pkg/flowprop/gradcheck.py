"""Central finite-difference check of the warp backward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowprop.tensors import FeatureMap, FlowField
from flowprop.warp import warp_backward, warp_feature


@dataclass(frozen=True)
class GradCheckResult:
    feature_error: float
    flow_error: float

    @property
    def max_error(self):
        return max(self.feature_error, self.flow_error)


def _objective(key, flow, upstream):
    return float(np.sum(upstream * warp_feature(FeatureMap(key), FlowField(flow)).warped.data))


def numeric_gradient(func, x, step=1e-3):
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += step
        minus[index] -= step
        grad[index] = (func(plus) - func(minus)) / (2 * step)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """max |a - n| / max(|a|, |n|, floor) over all elements; floor only guards exact zeros."""
    scale = np.maximum(floor, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def check_warp_gradients(key: FeatureMap, flow: FlowField, upstream: FeatureMap, step=1e-3) -> GradCheckResult:
    """Compare warp_backward with central differences of sum(upstream * warp(key, flow))."""
    key_data = key.data.astype(np.float64)
    flow_data = flow.data.astype(np.float64)
    up = upstream.data.astype(np.float64)
    grad_key, grad_flow = warp_backward(key, flow, upstream)
    num_key = numeric_gradient(lambda k: _objective(k, flow_data, up), key_data, step)
    num_flow = numeric_gradient(lambda f: _objective(key_data, f, up), flow_data, step)
    return GradCheckResult(
        feature_error=relative_error(grad_key.data, num_key),
        flow_error=relative_error(grad_flow.data, num_flow),
    )


def random_instance(rng: np.random.Generator, max_size=5, max_channels=3, margin=0.05):
    """
    Random (key, flow, upstream) whose sample coordinates sit at least `margin`
    away from integers, so the objective is smooth under the finite-difference step.
    """
    h, w = rng.integers(2, max_size + 1, size=2)
    c = int(rng.integers(1, max_channels + 1))
    base = rng.integers(-2, 3, size=(h, w, 2)).astype(np.float64)
    frac = rng.uniform(margin, 1.0 - margin, size=(h, w, 2))
    key = FeatureMap(rng.standard_normal((h, w, c)))
    upstream = FeatureMap(rng.standard_normal((h, w, c)))
    return key, FlowField(base + frac), upstream
