"""
Inverse warping of feature maps with bilinear sampling.

For every output cell p the key feature is sampled at p + flow(p) with the
bilinear kernel G(q, s) = max(0, 1 - |q_x - s_x|) * max(0, 1 - |q_y - s_y|),
independently per channel. Neighbours outside the grid contribute zero.
Flow is in cells of the feature grid, +x right and +y down.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from flowprop.errors import ContractError
from flowprop.tensors import (
    FeatureMap, FeaturePyramid, FlowField, ScaleMap, require_same_grid, require_same_shape,
)


@dataclass(frozen=True)
class WarpResult:
    warped: FeatureMap
    valid: np.ndarray  # (H, W) bool: every contributing neighbour was in bounds


@dataclass(frozen=True)
class _Taps:
    """Four bilinear neighbours per output cell, with zero weight where out of bounds."""
    x0: np.ndarray
    y0: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    valid: np.ndarray

    def corners(self):
        """(row, col, weight, in_bounds, dweight/dx, dweight/dy) for the four neighbours."""
        out = []
        for oy, wy, dwy in ((0, 1.0 - self.fy, -1.0), (1, self.fy, 1.0)):
            for ox, wx, dwx in ((0, 1.0 - self.fx, -1.0), (1, self.fx, 1.0)):
                out.append((self.y0 + oy, self.x0 + ox, wy * wx, dwx * wy, wx * dwy))
        return out


def _taps(height, width, sx, sy):
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    in_x = (x0 >= 0) & (x0 <= width - 1) & ((fx == 0) | (x0 + 1 <= width - 1))
    in_y = (y0 >= 0) & (y0 <= height - 1) & ((fy == 0) | (y0 + 1 <= height - 1))
    return _Taps(x0, y0, fx, fy, in_x & in_y)


def _gather(data, rows, cols):
    h, w, c = data.shape
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    values = data[np.clip(rows, 0, h - 1), np.clip(cols, 0, w - 1)]
    return np.where(inside[..., None], values, 0.0), inside


def bilinear_sample(feature: FeatureMap, point):
    """Bilinear interpolation of the channel vector at (x, y); out-of-grid neighbours count as zero."""
    x, y = float(point[0]), float(point[1])
    taps = _taps(feature.height, feature.width, np.array([[x]]), np.array([[y]]))
    data = feature.data.astype(np.float64)
    total = np.zeros(feature.channels)
    for rows, cols, weight, _, _ in taps.corners():
        values, _ = _gather(data, rows, cols)
        total += weight[0, 0] * values[0, 0]
    return total


def _sample_coords(flow: FlowField):
    ys, xs = np.mgrid[0:flow.height, 0:flow.width].astype(np.float64)
    return xs + flow.dx, ys + flow.dy


def warp_feature(key_feature: FeatureMap, flow: FlowField) -> WarpResult:
    """Inverse-warp key_feature by flow: out(p) = sum_q G(q, p + flow(p)) * key(q)."""
    require_same_grid(key_feature, flow, "warp_feature")
    sx, sy = _sample_coords(flow)
    taps = _taps(key_feature.height, key_feature.width, sx, sy)
    data = key_feature.data.astype(np.float64)
    out = np.zeros(data.shape)
    for rows, cols, weight, _, _ in taps.corners():
        values, _ = _gather(data, rows, cols)
        out += weight[..., None] * values
    warped = FeatureMap(out.astype(key_feature.data.dtype))
    return WarpResult(warped=warped, valid=taps.valid)


def apply_scale_map(feature: FeatureMap, scale: ScaleMap) -> FeatureMap:
    """Element-wise refinement: out(p, c) = feature(p, c) * scale(p, c)."""
    require_same_shape(feature, scale, "apply_scale_map")
    out = feature.data.astype(np.float64) * scale.data
    return FeatureMap(out.astype(feature.data.dtype))


def warp_backward(key_feature: FeatureMap, flow: FlowField, upstream: FeatureMap):
    """
    Gradients of sum(upstream * warp(key_feature, flow)) with respect to the
    key feature and the flow. At integer sample coordinates the flow gradient
    is the one-sided derivative taken toward +x / +y.
    """
    require_same_grid(key_feature, flow, "warp_backward")
    require_same_shape(key_feature, upstream, "warp_backward upstream")
    sx, sy = _sample_coords(flow)
    h, w, c = key_feature.shape
    taps = _taps(h, w, sx, sy)
    data = key_feature.data.astype(np.float64)
    up = upstream.data.astype(np.float64)

    grad_feature = np.zeros((h, w, c))
    grad_flow = np.zeros((h, w, 2))
    for rows, cols, weight, dw_dx, dw_dy in taps.corners():
        values, inside = _gather(data, rows, cols)
        # scatter-transpose of the gather
        contrib = np.where(inside[..., None], weight[..., None] * up, 0.0)
        np.add.at(grad_feature, (rows[inside], cols[inside]), contrib[inside])
        dot = np.sum(up * values, axis=-1)
        grad_flow[..., 0] += dw_dx * dot
        grad_flow[..., 1] += dw_dy * dot
    return FeatureMap(grad_feature), FlowField(grad_flow)


def warp_pyramid_masked(key: FeaturePyramid, flows: Sequence[FlowField], scales: Sequence[ScaleMap] | None,
                        stats: Counter | None = None):
    """warp_pyramid that also returns each level's valid mask. scales=None skips refinement."""
    if len(flows) != len(key) or (scales is not None and len(scales) != len(key)):
        raise ContractError(
            f"warp_pyramid: {len(key)} levels but {len(flows)} flows and "
            f"{'no' if scales is None else len(scales)} scale maps")
    levels, masks = [], []
    for index, feature in enumerate(key):
        result = warp_feature(feature, flows[index])
        warped = result.warped
        if stats is not None:
            stats["warp"] += 1
        if scales is not None:
            warped = apply_scale_map(warped, scales[index])
            if stats is not None:
                stats["scale"] += 1
        levels.append(warped)
        masks.append(result.valid)
    return FeaturePyramid(tuple(levels)), masks


def warp_pyramid(key: FeaturePyramid, flows: Sequence[FlowField], scales: Sequence[ScaleMap] | None,
                 stats: Counter | None = None) -> FeaturePyramid:
    """Per level: warp_feature, then apply_scale_map."""
    return warp_pyramid_masked(key, flows, scales, stats)[0]
