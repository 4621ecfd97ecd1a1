"""
Online per-frame detection pipeline.

The first frame is extracted directly. After that every k-th frame is a
key frame: it is extracted and, with memory aggregation on, fused with the
memory pyramid warped into it. The fused pyramid becomes the new memory.
Frames in between are never extracted; their features are the memory
pyramid warped by the flow from the frame to the last key image.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from flowprop import config as defaults
from flowprop.aggregation import EmbeddingConfig, aggregate_pyramid
from flowprop.detect import DetectionHead, HeadConfig
from flowprop.errors import ConfigError, ContractError
from flowprop.extractor import ExtractorConfig, ToyExtractor
from flowprop.flow import BlockMatchConfig, BlockMatcher, FlowEstimate, build_flow_pyramid
from flowprop.sampling import TrainingTriplet
from flowprop.tensors import FeaturePyramid, Image
from flowprop.timing import stage
from flowprop.warp import warp_pyramid, warp_pyramid_masked

Extractor = Callable[[Image], FeaturePyramid]
FlowEstimator = Callable[[Image, Image], FlowEstimate]

# name -> (feature approximation, scale maps, memory aggregation)
PRESETS = {
    "ssd": (False, False, False),
    "fa": (True, False, False),
    "fa+scale": (True, True, False),
    "fa+ma": (True, False, True),
    "fa+scale+ma": (True, True, True),
}


class FrameRole(enum.Enum):
    INITIAL = "initial"
    KEY = "key"
    NON_KEY = "non-key"


@dataclass(frozen=True)
class PipelineConfig:
    key_interval: int = defaults.KEY_INTERVAL
    enable_fa: bool = True
    enable_ma: bool = True
    enable_scale: bool = True
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    embed: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    flow: BlockMatchConfig = field(default_factory=BlockMatchConfig)
    head: HeadConfig = field(default_factory=HeadConfig)

    def __post_init__(self):
        if not isinstance(self.key_interval, (int, np.integer)) or self.key_interval < 1:
            raise ConfigError(f"key_interval must be an integer >= 1, got {self.key_interval!r}")
        if self.enable_ma and not self.enable_fa:
            raise ConfigError("memory aggregation needs feature approximation enabled")

    @classmethod
    def preset(cls, name, **overrides):
        """Ablation preset: ssd, fa, fa+scale, fa+ma or fa+scale+ma."""
        try:
            fa, scale, ma = PRESETS[name]
        except KeyError:
            raise ConfigError(f"unknown pipeline variant '{name}', expected one of {', '.join(PRESETS)}") from None
        return cls(enable_fa=fa, enable_scale=scale, enable_ma=ma, **overrides)

    def with_toggles(self, key_interval=None, fa=None, ma=None, scale=None):
        """Copy with command-line style overrides; None keeps the current value."""
        changes = {}
        if key_interval is not None:
            changes["key_interval"] = key_interval
        if fa is not None:
            changes["enable_fa"] = fa
            if not fa:
                changes["enable_ma"] = False
        if ma is not None:
            changes["enable_ma"] = ma
        if scale is not None:
            changes["enable_scale"] = scale
        return replace(self, **changes)

    @property
    def variant(self):
        for name, toggles in PRESETS.items():
            if toggles == (self.enable_fa, self.enable_scale, self.enable_ma):
                return name
        return "ssd"


@dataclass(frozen=True)
class MemoryState:
    pyramid: FeaturePyramid
    key_image: Image
    frames_since_key: int = 0


@dataclass
class FrameOutcome:
    index: int
    role: FrameRole
    detections: list
    timings: dict  # stage -> nanoseconds
    pyramid: FeaturePyramid
    masks: list | None = None  # warp valid masks per level, non-key frames only


def frame_role(index, key_interval):
    if index == 0:
        return FrameRole.INITIAL
    return FrameRole.KEY if index % key_interval == 0 else FrameRole.NON_KEY


class Pipeline:
    """Stateful single-stream pipeline; call step() once per frame, in order."""

    def __init__(self, config: PipelineConfig, extractor: Extractor | None = None,
                 flow_estimator: FlowEstimator | None = None, detector=None):
        self.config = config
        self.extractor = extractor or ToyExtractor(config.extractor)
        self.flow_estimator = flow_estimator or BlockMatcher(config.flow)
        self.detector = detector or DetectionHead(config.head, config.extractor.level_dims)
        self.counts = Counter()
        self.memory: MemoryState | None = None
        self.frame_index = 0

    def reset(self):
        self.counts.clear()
        self.memory = None
        self.frame_index = 0

    def _extract(self, frame, timings):
        with stage(timings, "extract"):
            pyramid = self.extractor(frame)
        self.counts["extract"] += 1
        return pyramid

    def _flows(self, frame, dims, timings):
        with stage(timings, "flow"):
            estimate = self.flow_estimator(self.memory.key_image, frame)
            flows = build_flow_pyramid(estimate, dims)
        self.counts["flow"] += 1
        return flows

    def _check_frame(self, frame):
        expected = self.config.extractor.input_size
        if (frame.height, frame.width) != expected:
            raise ContractError(f"frame is {frame.height}x{frame.width}, pipeline expects {expected[0]}x{expected[1]}")

    def step(self, frame: Image) -> FrameOutcome:
        self._check_frame(frame)
        cfg = self.config
        role = frame_role(self.frame_index, cfg.key_interval)
        timings = {}
        masks = None

        if role is FrameRole.NON_KEY and cfg.enable_fa:
            dims = self.memory.pyramid.dims
            flows = self._flows(frame, dims, timings)
            with stage(timings, "warp"):
                pyramid, masks = warp_pyramid_masked(
                    self.memory.pyramid, flows.flows, flows.scales if cfg.enable_scale else None, self.counts)
            self.memory = replace(self.memory, frames_since_key=self.memory.frames_since_key + 1)
        else:
            pyramid = self._extract(frame, timings)
            if role is FrameRole.KEY and cfg.enable_ma:
                flows = self._flows(frame, pyramid.dims, timings)
                pyramid = aggregate_pyramid(self.memory.pyramid, pyramid, flows, cfg.embed,
                                            use_scale=cfg.enable_scale, stats=self.counts, timings=timings)
            self.memory = MemoryState(pyramid=pyramid, key_image=frame)

        with stage(timings, "detect"):
            detections = self.detector(pyramid)
        self.counts["detect"] += 1

        outcome = FrameOutcome(self.frame_index, role, detections, timings, pyramid, masks)
        self.frame_index += 1
        return outcome

    def run(self, frames: Sequence[Image]) -> list:
        return [self.step(frame) for frame in frames]


def triplet_forward(frames: Sequence[Image], triplet: TrainingTriplet, config: PipelineConfig,
                    extractor: Extractor | None = None,
                    flow_estimator: FlowEstimator | None = None) -> FeaturePyramid:
    """
    Forward pass of the three-frame scheme: extract memory and key frames,
    aggregate the warped memory into the key, then warp the fused pyramid
    to the target frame.
    """
    extractor = extractor or ToyExtractor(config.extractor)
    flow_estimator = flow_estimator or BlockMatcher(config.flow)
    if triplet.target >= len(frames):
        raise ContractError(f"triplet target {triplet.target} is outside a clip of {len(frames)} frames")
    mem_image, key_image, target_image = (frames[i] for i in triplet.as_tuple())

    memory = extractor(mem_image)
    key = extractor(key_image)
    to_key = build_flow_pyramid(flow_estimator(mem_image, key_image), key.dims)
    fused = aggregate_pyramid(memory, key, to_key, config.embed, use_scale=config.enable_scale)
    to_target = build_flow_pyramid(flow_estimator(key_image, target_image), fused.dims)
    return warp_pyramid(fused, to_target.flows, to_target.scales if config.enable_scale else None)
