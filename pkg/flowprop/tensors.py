"""
Dense tensor containers shared by every stage of the pipeline.

Layout is row-major and channel-last everywhere: a grid of H x W cells,
each holding C values, stored as a numpy array of shape (H, W, C).
Containers are frozen and their arrays are made read-only on construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from flowprop.errors import ContractError


def _frozen_array(data, dtype=None):
    arr = np.array(data, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def _require_grid(arr, name, channels=None):
    if arr.ndim != 3:
        raise ContractError(f"{name} must be H x W x C, got shape {arr.shape}")
    if channels is not None and arr.shape[2] != channels:
        raise ContractError(f"{name} must have {channels} channels, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")


def shape_of(item):
    return tuple(item.data.shape)


def require_same_shape(a, b, what):
    """Raise ContractError naming both shapes when a and b differ."""
    if shape_of(a) != shape_of(b):
        raise ContractError(f"{what}: shape {shape_of(a)} does not match {shape_of(b)}")


def require_same_grid(a, b, what):
    """Raise ContractError when the spatial dims of a and b differ."""
    if shape_of(a)[:2] != shape_of(b)[:2]:
        raise ContractError(f"{what}: grid {shape_of(a)[:2]} does not match {shape_of(b)[:2]}")


class _Grid:
    data: np.ndarray

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return tuple(self.data.shape)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Image(_Grid):
    """RGB frame with values in [0, 1]."""
    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, np.float32)
        _require_grid(arr, "Image", channels=3)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ContractError("Image values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True, eq=False)
class FeatureMap(_Grid):
    """H x W x C activation grid. Keeps the dtype it was built with (float32 or float64)."""
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float64
        arr = _frozen_array(arr, dtype)
        _require_grid(arr, "FeatureMap")
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, height, width, channels, dtype=np.float64):
        return cls(np.zeros((height, width, channels), dtype=dtype))

    def channel(self, c):
        return FeatureMap(self.data[:, :, c:c + 1])


@dataclass(frozen=True, eq=False)
class FlowField(_Grid):
    """Per-cell (dx, dy) displacement in cells of its own grid; +x right, +y down."""
    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, np.float64)
        _require_grid(arr, "FlowField", channels=2)
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width, 2)))

    @classmethod
    def constant(cls, height, width, dx, dy):
        data = np.empty((height, width, 2))
        data[..., 0] = dx
        data[..., 1] = dy
        return cls(data)

    @property
    def dx(self):
        return self.data[..., 0]

    @property
    def dy(self):
        return self.data[..., 1]


@dataclass(frozen=True, eq=False)
class ScaleMap(_Grid):
    """Non-negative multiplicative refinement, one factor per cell and channel."""
    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, np.float64)
        _require_grid(arr, "ScaleMap")
        if arr.size and arr.min() < 0.0:
            raise ContractError("ScaleMap values must be >= 0")
        object.__setattr__(self, "data", arr)

    @classmethod
    def ones(cls, height, width, channels):
        return cls(np.ones((height, width, channels)))


@dataclass(frozen=True)
class FeaturePyramid:
    """Ordered feature levels, finest first; spatial dims strictly decrease."""
    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ContractError("FeaturePyramid needs at least one level")
        for i, (fine, coarse) in enumerate(zip(levels, levels[1:])):
            if coarse.height * coarse.width >= fine.height * fine.width:
                raise ContractError(
                    f"pyramid level {i + 1} {coarse.shape} is not smaller than level {i} {fine.shape}")
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)

    def __iter__(self) -> Iterator[FeatureMap]:
        return iter(self.levels)

    def __getitem__(self, index) -> FeatureMap:
        return self.levels[index]

    @property
    def dims(self):
        """(H, W, C) of every level."""
        return [level.shape for level in self.levels]



def stack_channels(maps: Sequence[FeatureMap]):
    """Concatenate single-level maps along the channel axis."""
    return FeatureMap(np.concatenate([m.data for m in maps], axis=2))
