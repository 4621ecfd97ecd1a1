"""Frame sampling: three-frame training triplets and evenly spaced evaluation frames."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flowprop import config as defaults
from flowprop.errors import SamplingError


@dataclass(frozen=True)
class TrainingTriplet:
    mem: int
    key: int
    target: int

    def __post_init__(self):
        if not 0 <= self.mem < self.key <= self.target:
            raise SamplingError(f"invalid triplet (mem={self.mem}, key={self.key}, target={self.target})")

    def as_tuple(self):
        return self.mem, self.key, self.target


def make_triplet(target, offset, t_mem_k=defaults.T_MEM_TO_K) -> TrainingTriplet:
    """key = max(target - offset, t_mem_k), mem = key - t_mem_k."""
    if t_mem_k < 1:
        raise SamplingError(f"memory-to-key offset must be >= 1, got {t_mem_k}")
    if offset < 0:
        raise SamplingError(f"key-to-target offset must be >= 0, got {offset}")
    if target < t_mem_k:
        raise SamplingError(f"target frame {target} leaves no room for a memory frame {t_mem_k} back")
    key = max(target - offset, t_mem_k)
    return TrainingTriplet(mem=key - t_mem_k, key=key, target=target)


def select_training_triplet(clip_length, t_mem_k=defaults.T_MEM_TO_K, t_k_i=defaults.T_K_TO_I,
                            rng: np.random.Generator | None = None) -> TrainingTriplet:
    """
    Draw a (mem, key, target) triplet from a clip.

    The key-to-target offset is uniform in [0, t_k_i]. Targets come from
    [t_mem_k + t_k_i, L - 1] when the clip is long enough, so no offset is
    ever clamped; shorter clips fall back to [t_mem_k, L - 1] and clamp.
    """
    if t_k_i < 0:
        raise SamplingError(f"key-to-target offset must be >= 0, got {t_k_i}")
    if clip_length <= t_mem_k:
        raise SamplingError(f"clip of {clip_length} frames is too short for a memory offset of {t_mem_k}")
    rng = rng if rng is not None else np.random.default_rng()
    low = t_mem_k + t_k_i if t_mem_k + t_k_i <= clip_length - 1 else t_mem_k
    target = int(rng.integers(low, clip_length))
    offset = int(rng.integers(0, t_k_i + 1))
    return make_triplet(target, offset, t_mem_k)


def sample_clip_frames(clip_length, n) -> list:
    """round(j * (L - 1) / (n - 1)) for j < n, halves rounded up, duplicates dropped in order."""
    if clip_length < 1 or n < 1:
        raise SamplingError(f"need clip_length >= 1 and n >= 1, got {clip_length} and {n}")
    if n == 1:
        return [0]
    span, steps = clip_length - 1, n - 1
    indices = [(2 * j * span + steps) // (2 * steps) for j in range(n)]
    return list(dict.fromkeys(indices))


def evaluation_frames(clip_length) -> list:
    """15 evenly sampled frames for long clips, 10 for clips of at most SHORT_CLIP_LENGTH frames."""
    n = defaults.CLIP_SAMPLES_SHORT if clip_length <= defaults.SHORT_CLIP_LENGTH else defaults.CLIP_SAMPLES_LONG
    return sample_clip_frames(clip_length, n)
