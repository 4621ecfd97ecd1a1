"""
Deterministic toy feature extractor standing in for the detection backbone.

Every level is a stack of bias-free 3x3 convolutions with seeded random
weights and a clip-at-zero activation. Stride-2 layers halve the grid
(ceil(n / 2), zero padding of one cell), so the default 300 x 300 input
yields 38, 19, 10, 5 and 3 cells per side. Without biases, a translation
of the input by one level stride shifts the interior cells of that level
by exactly one cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from flowprop import config as defaults
from flowprop.errors import ConfigError
from flowprop.tensors import FeatureMap, FeaturePyramid, Image


def _halve(n):
    return -(-n // 2)


def _halvings_between(src, dst):
    """Number of ceil-halvings taking src to dst, or None if dst is never hit."""
    count = 0
    while src > dst:
        src = _halve(src)
        count += 1
    return count if src == dst else None


@dataclass(frozen=True)
class ExtractorConfig:
    seed: int = defaults.EXTRACTOR_SEED
    input_size: tuple = defaults.INPUT_SIZE
    level_dims: tuple = tuple(defaults.LEVEL_DIMS)
    refine_depth: int = defaults.REFINE_DEPTH
    halvings: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "level_dims", tuple(tuple(int(v) for v in d) for d in self.level_dims))
        if len(self.input_size) != 2 or min(self.input_size) < 1:
            raise ConfigError(f"input_size must be a positive (H, W) pair, got {self.input_size}")
        if not self.level_dims:
            raise ConfigError("extractor needs at least one level")
        if self.refine_depth < 0:
            raise ConfigError(f"refine_depth must be >= 0, got {self.refine_depth}")

        halvings = []
        prev_h, prev_w = self.input_size
        for index, dims in enumerate(self.level_dims):
            if len(dims) != 3 or min(dims) < 1:
                raise ConfigError(f"level {index} dims must be positive (H, W, C), got {dims}")
            h, w, _ = dims
            steps_h = _halvings_between(prev_h, h)
            steps_w = _halvings_between(prev_w, w)
            if steps_h is None or steps_w is None or steps_h != steps_w or steps_h == 0:
                raise ConfigError(
                    f"level {index} dims {h}x{w} are not reachable from {prev_h}x{prev_w} "
                    "by repeated stride-2 halving")
            halvings.append(steps_h)
            prev_h, prev_w = h, w
        object.__setattr__(self, "halvings", tuple(halvings))

    @property
    def num_levels(self):
        return len(self.level_dims)


def level_strides(config: ExtractorConfig):
    """Pixel stride of each level's cell grid."""
    strides, total = [], 0
    for steps in config.halvings:
        total += steps
        strides.append(2 ** total)
    return strides


def conv3x3(x, weights, stride):
    """
    Bias-free 3x3 convolution with one cell of zero padding.
    x: (H, W, Cin); weights: (3, 3, Cin, Cout). Output grid is ceil(n / stride).
    """
    h, w, _ = x.shape
    out_h, out_w = -(-h // stride), -(-w // stride)
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (3, 3), axis=(0, 1))[::stride, ::stride][:out_h, :out_w]
    # windows: (out_h, out_w, Cin, 3, 3)
    return np.tensordot(windows, weights.transpose(2, 0, 1, 3), axes=([2, 3, 4], [0, 1, 2]))


def relu(x):
    return np.maximum(x, 0, out=x)


@lru_cache(maxsize=16)
def _layer_weights(config: ExtractorConfig):
    """Per level, the (weights, stride) of each layer. Same config -> identical weights."""
    levels = []
    in_channels = 3
    for index, ((_, _, channels), steps) in enumerate(zip(config.level_dims, config.halvings)):
        layers = []
        for layer in range(steps + config.refine_depth):
            rng = np.random.default_rng([config.seed, index, layer])
            fan_in = 9 * in_channels
            weights = rng.standard_normal((3, 3, in_channels, channels)) * np.sqrt(2.0 / fan_in)
            weights = weights.astype(np.float32)
            weights.flags.writeable = False
            layers.append((weights, 2 if layer < steps else 1))
            in_channels = channels
        levels.append(tuple(layers))
    return tuple(levels)


def toy_extract(image: Image, config: ExtractorConfig) -> FeaturePyramid:
    """Run the seeded convolution stack and return one FeatureMap per configured level."""
    if (image.height, image.width) != config.input_size:
        raise ConfigError(
            f"image is {image.height}x{image.width}, extractor expects "
            f"{config.input_size[0]}x{config.input_size[1]}")
    x = np.array(image.data, dtype=np.float32)
    levels = []
    for layers in _layer_weights(config):
        for weights, stride in layers:
            x = relu(conv3x3(x, weights, stride).astype(np.float32, copy=False))
        levels.append(FeatureMap(x))
    return FeaturePyramid(tuple(levels))


class ToyExtractor:
    """Callable provider wrapping toy_extract with a fixed config."""

    def __init__(self, config: ExtractorConfig):
        self.config = config

    def __call__(self, image: Image) -> FeaturePyramid:
        return toy_extract(image, self.config)
