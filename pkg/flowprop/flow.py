"""
Flow estimation stand-in and multi-scale flow / scale-map pyramids.

Block matching answers the inverse-warp question: for a block centred at
p in the current frame, which displacement d puts the matching content of
the key frame at p + d? Displacements are searched exhaustively within the
search radius and the smallest mean absolute difference wins; ties go to
the displacement closest to zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from flowprop import config as defaults
from flowprop.errors import ConfigError, ContractError
from flowprop.tensors import FlowField, Image, ScaleMap, require_same_shape


@dataclass(frozen=True)
class BlockMatchConfig:
    block_radius: int = defaults.BLOCK_RADIUS
    search_radius: int = defaults.SEARCH_RADIUS
    texture_threshold: float = defaults.TEXTURE_THRESHOLD
    grid_stride: int = defaults.GRID_STRIDE

    def __post_init__(self):
        if self.block_radius < 1:
            raise ConfigError(f"block_radius must be >= 1, got {self.block_radius}")
        if self.search_radius < 1:
            raise ConfigError(f"search_radius must be >= 1, got {self.search_radius}")
        if not self.texture_threshold >= 0:
            raise ConfigError(f"texture_threshold must be >= 0, got {self.texture_threshold}")
        if self.grid_stride < 1:
            raise ConfigError(f"grid_stride must be >= 1, got {self.grid_stride}")

    def grid_dims(self, height, width):
        return -(-height // self.grid_stride), -(-width // self.grid_stride)


@dataclass(frozen=True)
class FlowEstimate:
    """Flow at base resolution plus its scale map (all ones from block matching)."""
    flow: FlowField
    scale: ScaleMap

    def __post_init__(self):
        if (self.flow.height, self.flow.width) != (self.scale.height, self.scale.width):
            raise ContractError(
                f"FlowEstimate: flow grid {self.flow.shape[:2]} does not match scale grid {self.scale.shape[:2]}")


@dataclass(frozen=True)
class FlowPyramid:
    """Per-level (flow, scale map) pairs aligned with a feature pyramid."""
    flows: tuple
    scales: tuple

    def __post_init__(self):
        object.__setattr__(self, "flows", tuple(self.flows))
        object.__setattr__(self, "scales", tuple(self.scales))
        if len(self.flows) != len(self.scales):
            raise ContractError(f"FlowPyramid: {len(self.flows)} flows but {len(self.scales)} scale maps")

    def __len__(self):
        return len(self.flows)

    @property
    def dims(self):
        return [scale.shape for scale in self.scales]

    def matches(self, feature_dims):
        return self.dims == [tuple(d) for d in feature_dims]


def _candidates(radius):
    """All displacements within radius, nearest to zero first."""
    offsets = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    return sorted(offsets, key=lambda d: (d[0] ** 2 + d[1] ** 2, abs(d[1]), abs(d[0]), d[1], d[0]))


def estimate_flow(key_image: Image, current_image: Image, config: BlockMatchConfig) -> FlowEstimate:
    """
    Block-matching flow from the current frame to the key frame, one vector
    per grid cell (centred at pixel grid_stride * index), in grid units.
    """
    require_same_shape(key_image, current_image, "estimate_flow")
    h, w = key_image.height, key_image.width
    b, r, s = config.block_radius, config.search_radius, config.grid_stride
    size = 2 * b + 1
    gh, gw = config.grid_dims(h, w)
    rows = b + s * np.arange(gh)
    cols = b + s * np.arange(gw)

    key = key_image.data.astype(np.float64).mean(axis=2)
    cur = np.pad(current_image.data.astype(np.float64).mean(axis=2), b, constant_values=np.nan)
    key = np.pad(key, b + r, constant_values=np.nan)

    def block_mean(values):
        return uniform_filter(values, size=size, mode="constant", cval=0.0)[np.ix_(rows, cols)]

    cur_valid = np.isfinite(cur)
    cur_filled = np.where(cur_valid, cur, 0.0)
    coverage = block_mean(cur_valid.astype(np.float64))
    mean = block_mean(cur_filled) / np.maximum(coverage, 1e-12)
    variance = block_mean(cur_filled ** 2) / np.maximum(coverage, 1e-12) - mean ** 2

    best = np.full((gh, gw), np.inf)
    best_d = np.zeros((gh, gw, 2))
    for dx, dy in _candidates(r):
        shifted = key[r + dy:r + dy + h + 2 * b, r + dx:r + dx + w + 2 * b]
        valid = cur_valid & np.isfinite(shifted)
        diff = np.where(valid, np.abs(cur_filled - np.where(valid, shifted, 0.0)), 0.0)
        count = block_mean(valid.astype(np.float64))
        cost = np.where(count >= 0.5 * coverage, block_mean(diff) / np.maximum(count, 1e-12), np.inf)
        better = cost < best
        best = np.where(better, cost, best)
        best_d[better] = (dx, dy)

    best_d[variance < config.texture_threshold] = 0.0
    flow = FlowField(best_d / s)
    return FlowEstimate(flow=flow, scale=ScaleMap.ones(gh, gw, 1))


class BlockMatcher:
    """Callable flow provider: (key_image, current_image) -> FlowEstimate."""

    def __init__(self, config: BlockMatchConfig):
        self.config = config

    def __call__(self, key_image: Image, current_image: Image) -> FlowEstimate:
        return estimate_flow(key_image, current_image, self.config)


def _pool_matrix(src, dst):
    """(dst, src) averaging matrix; output cell i averages source cells [floor(i*src/dst), ceil((i+1)*src/dst))."""
    matrix = np.zeros((dst, src))
    for i in range(dst):
        lo = (i * src) // dst
        hi = -(-((i + 1) * src) // dst)
        matrix[i, lo:hi] = 1.0 / (hi - lo)
    return matrix


def _pool(data, height, width):
    pool_y = _pool_matrix(data.shape[0], height)
    pool_x = _pool_matrix(data.shape[1], width)
    return np.einsum("ij,jkc,lk->ilc", pool_y, data, pool_x)


def downscale_flow(flow: FlowField, target) -> FlowField:
    """Average-pool to target (H, W), then rescale displacements into target grid units."""
    height, width = int(target[0]), int(target[1])
    if height < 1 or width < 1:
        raise ContractError(f"downscale_flow: target dims must be positive, got {height}x{width}")
    pooled = _pool(flow.data, height, width)
    pooled[..., 0] *= width / flow.width
    pooled[..., 1] *= height / flow.height
    return FlowField(pooled)


def resize_scale_map(scale: ScaleMap, target) -> ScaleMap:
    """Window-average a scale map to target (H, W[, C]); one-channel maps broadcast to C."""
    height, width = int(target[0]), int(target[1])
    pooled = _pool(scale.data, height, width)
    if len(target) > 2:
        channels = int(target[2])
        if pooled.shape[2] == 1 and channels != 1:
            pooled = np.repeat(pooled, channels, axis=2)
        elif pooled.shape[2] != channels:
            raise ContractError(
                f"resize_scale_map: scale map has {scale.channels} channels, level needs {channels}")
    return ScaleMap(np.maximum(pooled, 0.0))


def build_flow_pyramid(base: FlowEstimate, target_dims: Sequence) -> FlowPyramid:
    """One (flow, scale map) pair per target level, each no larger than the base grid."""
    if not target_dims:
        raise ContractError("build_flow_pyramid: no target levels")
    flows, scales = [], []
    for index, dims in enumerate(target_dims):
        if dims[0] > base.flow.height or dims[1] > base.flow.width:
            raise ContractError(
                f"build_flow_pyramid: level {index} {tuple(dims[:2])} is larger than base "
                f"{base.flow.shape[:2]}")
        flows.append(downscale_flow(base.flow, dims))
        scales.append(resize_scale_map(base.scale, dims))
    return FlowPyramid(flows, scales)


def identity_flow_pyramid(target_dims: Sequence) -> FlowPyramid:
    """Zero flows and all-ones scale maps at the given (H, W, C) dims."""
    return FlowPyramid(
        [FlowField.zeros(h, w) for h, w, _ in target_dims],
        [ScaleMap.ones(h, w, c) for h, w, c in target_dims],
    )
