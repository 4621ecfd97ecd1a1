"""
Memory aggregation at key frames.

Both feature maps are projected by a small bottleneck embedding
(1x1 convolutions C -> C/2 -> C/2 -> 2C, clip-at-zero between layers), the
cosine similarity of the embeddings gives a score per cell, and the
two-term softmax of (similarity, 1) yields weights that sum to one. All
channels of a cell share its weight.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import softmax

from flowprop import config as defaults
from flowprop.errors import ConfigError, ContractError
from flowprop.flow import FlowPyramid
from flowprop.tensors import FeatureMap, FeaturePyramid, require_same_shape
from flowprop.timing import stage
from flowprop.warp import apply_scale_map, warp_feature


@dataclass(frozen=True)
class EmbeddingConfig:
    seed: int = defaults.EMBED_SEED
    bias: float = 0.0  # constant bias of every layer

    @staticmethod
    def channel_plan(channels):
        """Filters of the three layers for a level with `channels` channels."""
        if channels % 2:
            raise ConfigError(f"embedding needs an even channel count, got {channels}")
        return channels // 2, channels // 2, channels * 2


@dataclass(frozen=True)
class WeightPair:
    w_mem: np.ndarray  # (H, W)
    w_cur: np.ndarray  # (H, W)


@lru_cache(maxsize=64)
def _embedding_weights(seed, level, channels):
    plan = EmbeddingConfig.channel_plan(channels)
    rng = np.random.default_rng([seed, level, channels])
    layers, fan_in = [], channels
    for width in plan:
        weights = rng.standard_normal((fan_in, width)) * np.sqrt(2.0 / fan_in)
        weights.flags.writeable = False
        layers.append(weights)
        fan_in = width
    return tuple(layers)


def embed_feature(feature: FeatureMap, config: EmbeddingConfig, level: int = 0) -> FeatureMap:
    """Three 1x1 projections; output keeps H x W and has 2C channels."""
    layers = _embedding_weights(config.seed, level, feature.channels)
    x = feature.data.astype(np.float64)
    for index, weights in enumerate(layers):
        x = x @ weights + config.bias
        if index < len(layers) - 1:
            x = np.maximum(x, 0.0)
    return FeatureMap(x)


def cosine_similarity(a: np.ndarray, b: np.ndarray):
    """Per-cell cosine of two (H, W, C) arrays; zero-norm vectors give 0."""
    dot = np.sum(a * b, axis=-1)
    norms = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norms > 0, dot / np.where(norms > 0, norms, 1.0), 0.0)


def similarity_weights(embedded_mem: FeatureMap, embedded_cur: FeatureMap) -> WeightPair:
    """Softmax over (cos(e_mem, e_cur), 1) at every cell."""
    require_same_shape(embedded_mem, embedded_cur, "similarity_weights")
    s_mem = cosine_similarity(embedded_mem.data, embedded_cur.data)
    # the current frame is always perfectly similar to itself
    s_cur = np.ones_like(s_mem)
    weights = softmax(np.stack([s_mem, s_cur]), axis=0)
    return WeightPair(w_mem=weights[0], w_cur=weights[1])


def aggregate_features(memory_warped: FeatureMap, current: FeatureMap, weights: WeightPair) -> FeatureMap:
    """out(p, c) = w_mem(p) * memory(p, c) + w_cur(p) * current(p, c)."""
    require_same_shape(memory_warped, current, "aggregate_features")
    if weights.w_mem.shape != (current.height, current.width):
        raise ContractError(
            f"aggregate_features: weights {weights.w_mem.shape} do not match grid {(current.height, current.width)}")
    mem = memory_warped.data.astype(np.float64)
    cur = current.data.astype(np.float64)
    out = cur + weights.w_mem[..., None] * (mem - cur)
    # rounding can push the lerp one ulp past its endpoints
    out = np.clip(out, np.minimum(mem, cur), np.maximum(mem, cur))
    return FeatureMap(out.astype(current.data.dtype))


def aggregate_pyramid(memory: FeaturePyramid, current: FeaturePyramid, flows: FlowPyramid,
                      embed: EmbeddingConfig, use_scale: bool = True,
                      stats: Counter | None = None, timings: dict | None = None) -> FeaturePyramid:
    """
    Per level: warp memory into the current frame (flow, then scale map),
    embed both, weight by similarity and fuse.
    timings, when given, accumulates nanoseconds under "embed" and "aggregate".
    """
    if memory.dims != current.dims:
        raise ContractError(f"aggregate_pyramid: memory dims {memory.dims} do not match current {current.dims}")
    if not flows.matches(current.dims):
        raise ContractError(f"aggregate_pyramid: flow dims {flows.dims} do not match features {current.dims}")
    levels = []
    for index, (mem, cur) in enumerate(zip(memory, current)):
        with stage(timings, "aggregate"):
            warped = warp_feature(mem, flows.flows[index]).warped
            if use_scale:
                warped = apply_scale_map(warped, flows.scales[index])
        with stage(timings, "embed"):
            e_mem = embed_feature(warped, embed, index)
            e_cur = embed_feature(cur, embed, index)
        with stage(timings, "aggregate"):
            fused = aggregate_features(warped, cur, similarity_weights(e_mem, e_cur))
        levels.append(fused)
        if stats is not None:
            stats["aggregate"] += 1
            stats["embed"] += 2
    return FeaturePyramid(tuple(levels))
