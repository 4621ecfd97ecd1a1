"""
Synthetic video with exact motion ground truth.

Textured rectangles translate at constant integer velocities over a
static background. Pixel values are 8-bit levels, so an exported pixmap
sequence reads back bit-identical. Ground-truth flow follows the
pipeline's convention: for a pixel p of frame i, flow(p) = position of the
same object point in key frame k minus p, i.e. velocity * (k - i).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from flowprop import config as defaults
from flowprop.detect import Box
from flowprop.errors import ConfigError, ContractError, EvaluationError, FormatError
from flowprop.evaluate import GroundTruth, evaluate_frame_map
from flowprop.extractor import ExtractorConfig, ToyExtractor
from flowprop.flow import BlockMatchConfig, FlowEstimate
from flowprop.pipeline import FrameRole, Pipeline, PipelineConfig
from flowprop.pixmap import read_pixmap, write_pixmap
from flowprop.tensors import FlowField, Image, ScaleMap

BACKGROUNDS = ("textured", "flat")
FLAT_LEVEL = 128


@dataclass(frozen=True)
class ObjectSpec:
    position: tuple  # (x, y) of the top-left pixel in frame 0
    size: tuple = defaults.SYNTH_OBJECT_SIZE  # (h, w)
    velocity: tuple = defaults.SYNTH_VELOCITY  # (vx, vy) pixels per frame
    class_id: int = 0
    texture_seed: int = 0

    def __post_init__(self):
        for name in ("position", "size", "velocity"):
            value = tuple(int(v) for v in getattr(self, name))
            if len(value) != 2:
                raise ConfigError(f"object {name} must be a pair, got {getattr(self, name)}")
            object.__setattr__(self, name, value)
        if min(self.size) < 1:
            raise ConfigError(f"object size must be positive, got {self.size}")
        if self.class_id < 0:
            raise ConfigError(f"class_id must be >= 0, got {self.class_id}")

    def origin(self, frame):
        return (self.position[0] + self.velocity[0] * frame, self.position[1] + self.velocity[1] * frame)


def default_objects(size=defaults.SYNTH_SIZE, count=defaults.SYNTH_OBJECTS,
                    object_size=defaults.SYNTH_OBJECT_SIZE, velocity=defaults.SYNTH_VELOCITY):
    """`count` objects in evenly spaced rows, starting near the edge they move away from."""
    height, width = size
    oh, ow = object_size
    objects = []
    for j in range(count):
        y = (j + 1) * height // (count + 1) - oh // 2
        x = 8 if velocity[0] >= 0 else width - ow - 8
        objects.append(ObjectSpec((x, y), object_size, velocity, class_id=j % defaults.NUM_CLASSES, texture_seed=j))
    return tuple(objects)


@dataclass(frozen=True)
class SynthConfig:
    size: tuple = defaults.SYNTH_SIZE  # (H, W)
    frames: int = defaults.SYNTH_FRAMES
    objects: tuple = field(default_factory=default_objects)
    background: str = "textured"
    noise: float = defaults.SYNTH_NOISE  # per-frame additive noise amplitude
    seed: int = defaults.SYNTH_SEED

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(int(v) for v in self.size))
        object.__setattr__(self, "objects", tuple(self.objects))
        if len(self.size) != 2 or min(self.size) < 1:
            raise ConfigError(f"size must be a positive (H, W) pair, got {self.size}")
        if self.frames < 1:
            raise ConfigError(f"frames must be >= 1, got {self.frames}")
        if self.background not in BACKGROUNDS:
            raise ConfigError(f"background must be one of {', '.join(BACKGROUNDS)}, got '{self.background}'")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError(f"noise must lie in [0, 1], got {self.noise}")


@dataclass(frozen=True)
class SynthSequence:
    config: SynthConfig
    frames: tuple  # Image per frame
    boxes: tuple  # per frame, a list of GroundTruth in normalised coordinates

    def __len__(self):
        return len(self.frames)

    def object_mask(self, frame):
        """(H, W) int map: index of the topmost object covering each pixel, -1 for background."""
        height, width = self.config.size
        owner = np.full((height, width), -1)
        for j, obj in enumerate(self.config.objects):
            x, y = obj.origin(frame)
            owner[y:y + obj.size[0], x:x + obj.size[1]] = j
        return owner

    def pixel_flow(self, i, k):
        """(H, W, 2) displacement from frame i to key frame k, in pixels."""
        owner = self.object_mask(i)
        flow = np.zeros(owner.shape + (2,))
        for j, obj in enumerate(self.config.objects):
            flow[owner == j] = (obj.velocity[0] * (k - i), obj.velocity[1] * (k - i))
        return flow


def _texture(seed, shape, salt):
    rng = np.random.default_rng([seed, salt])
    return rng.integers(0, 256, size=shape, dtype=np.int64)


def levels_to_image(levels) -> Image:
    """8-bit levels -> Image, computed the same way read_pixmap does."""
    return Image(np.asarray(levels, dtype=np.uint8).astype(np.float32) / 255.0)


def _check_bounds(config: SynthConfig):
    height, width = config.size
    for frame in range(config.frames):
        for j, obj in enumerate(config.objects):
            x, y = obj.origin(frame)
            if x < 0 or y < 0 or x + obj.size[1] > width or y + obj.size[0] > height:
                raise ConfigError(
                    f"object {j} leaves the {height}x{width} frame at frame {frame} (top-left at {x},{y})")


def generate_sequence(config: SynthConfig, seed: int | None = None) -> SynthSequence:
    """Render every frame; same config and seed give bit-identical frames."""
    seed = config.seed if seed is None else seed
    _check_bounds(config)
    height, width = config.size
    if config.background == "textured":
        background = _texture(seed, (height, width, 3), 1_000_003)
    else:
        background = np.full((height, width, 3), FLAT_LEVEL, dtype=np.int64)
    textures = [_texture(seed, obj.size + (3,), obj.texture_seed) for obj in config.objects]
    noise_rng = np.random.default_rng([seed, 2_000_003])

    frames, boxes = [], []
    for frame in range(config.frames):
        levels = background.copy()
        truths = []
        for obj, texture in zip(config.objects, textures):
            x, y = obj.origin(frame)
            h, w = obj.size
            levels[y:y + h, x:x + w] = texture
            truths.append(GroundTruth(Box(x / width, y / height, (x + w) / width, (y + h) / height), obj.class_id))
        if config.noise > 0:
            jitter = np.round(noise_rng.uniform(-config.noise, config.noise, levels.shape) * 255.0)
            levels = levels + jitter.astype(np.int64)
        frames.append(levels_to_image(np.clip(levels, 0, 255)))
        boxes.append(truths)
    return SynthSequence(config=config, frames=tuple(frames), boxes=tuple(boxes))


def synth_extractor_config(size=defaults.SYNTH_SIZE, channels=8, num_levels=5, refine_depth=0, seed=None):
    """Extractor halving once per level from the input, so level 0 has stride 2."""
    dims, (h, w) = [], size
    for _ in range(num_levels):
        h, w = -(-h // 2), -(-w // 2)
        dims.append((h, w, channels))
    return ExtractorConfig(seed=defaults.EXTRACTOR_SEED if seed is None else seed,
                           input_size=tuple(size), level_dims=tuple(dims), refine_depth=refine_depth)


def synth_flow_config(search_radius=6, block_radius=4):
    """Block matching at the level-0 grid of synth_extractor_config."""
    return BlockMatchConfig(block_radius=block_radius, search_radius=search_radius, grid_stride=2)


def ground_truth_flow(sequence: SynthSequence, i, k, grid_dims, stride) -> FlowField:
    """Pixel flow sampled at cell centres (pixel stride * index), in cells of that grid."""
    gh, gw = int(grid_dims[0]), int(grid_dims[1])
    height, width = sequence.config.size
    rows = np.minimum(stride * np.arange(gh), height - 1)
    cols = np.minimum(stride * np.arange(gw), width - 1)
    return FlowField(sequence.pixel_flow(i, k)[np.ix_(rows, cols)] / stride)


class GroundTruthFlow:
    """Flow provider that looks frames up in a sequence and returns exact flow."""

    def __init__(self, sequence: SynthSequence, grid_dims, stride):
        self.sequence = sequence
        self.grid_dims = tuple(grid_dims[:2])
        self.stride = stride
        self._index = {id(frame): n for n, frame in enumerate(sequence.frames)}

    def _lookup(self, image):
        try:
            return self._index[id(image)]
        except KeyError:
            raise ContractError("ground-truth flow only serves frames of its own sequence") from None

    def __call__(self, key_image: Image, current_image: Image) -> FlowEstimate:
        k, i = self._lookup(key_image), self._lookup(current_image)
        flow = ground_truth_flow(self.sequence, i, k, self.grid_dims, self.stride)
        return FlowEstimate(flow=flow, scale=ScaleMap.ones(*self.grid_dims, 1))


def receptive_radius(config: ExtractorConfig, level):
    """Pixels from a level cell's centre to the edge of its receptive field."""
    radius, stride = 0, 1
    for steps in config.halvings[:level + 1]:
        for _ in range(steps):
            radius += stride
            stride *= 2
        radius += stride * config.refine_depth
    return radius


def object_interior_cells(sequence: SynthSequence, i, k, grid_dims, stride, radius):
    """
    (H, W) bool: cells of a level whose receptive field lies inside a single
    object in frame i and whose motion to frame k is a whole number of cells.
    """
    gh, gw = int(grid_dims[0]), int(grid_dims[1])
    owner = sequence.object_mask(i)
    height, width = owner.shape
    ys = stride * np.arange(gh)[:, None]
    xs = stride * np.arange(gw)[None, :]
    cells = np.zeros((gh, gw), dtype=bool)
    for j, obj in enumerate(sequence.config.objects):
        dx, dy = obj.velocity[0] * (k - i), obj.velocity[1] * (k - i)
        if dx % stride or dy % stride:
            continue
        x, y = obj.origin(i)
        inside = ((xs - radius >= x) & (xs + radius < x + obj.size[1])
                  & (ys - radius >= y) & (ys + radius < y + obj.size[0]))
        inside &= (xs < width) & (ys < height)
        # nothing drawn over it
        visible = np.zeros_like(inside)
        ry, rx = np.nonzero(inside)
        if ry.size:
            visible[ry, rx] = [np.all(owner[max(py - radius, 0):py + radius + 1, max(px - radius, 0):px + radius + 1] == j)
                               for py, px in zip(ys[ry, 0], xs[0, rx])]
        cells |= visible
    return cells


def _interior_band(shape, band=1):
    mask = np.zeros(shape[:2], dtype=bool)
    mask[band:shape[0] - band, band:shape[1] - band] = True
    return mask


def approximation_error(sequence: SynthSequence, config: PipelineConfig, k_values: Sequence[int],
                        flow_estimator: Callable | None = None) -> dict:
    """
    k -> mean absolute difference between approximated and directly extracted
    features over non-key frames, counting only valid cells away from the grid border.
    """
    extractor = ToyExtractor(config.extractor)
    errors = {}
    for k in sorted(set(k_values)):
        if k < 1:
            raise ConfigError(f"key interval must be >= 1, got {k}")
        pipeline = Pipeline(config.with_toggles(key_interval=k), extractor=extractor, flow_estimator=flow_estimator)
        total, count = 0.0, 0
        for frame in sequence.frames:
            outcome = pipeline.step(frame)
            if outcome.role is not FrameRole.NON_KEY or outcome.masks is None:
                continue
            direct = extractor(frame)
            for approx, truth, valid in zip(outcome.pyramid, direct, outcome.masks):
                keep = valid & _interior_band(valid.shape)
                diff = np.abs(approx.data.astype(np.float64) - truth.data.astype(np.float64))[keep]
                total += float(diff.sum())
                count += diff.size
        errors[k] = total / count if count else 0.0
    return errors


def detection_fidelity(sequence: SynthSequence, config: PipelineConfig, k_values: Sequence[int],
                       flow_estimator: Callable | None = None) -> dict:
    """k -> F-mAP of the pipeline's detections against the per-frame baseline's detections."""
    extractor = ToyExtractor(config.extractor)
    baseline = Pipeline(config.with_toggles(fa=False), extractor=extractor).run(sequence.frames)
    pseudo_truth = [[GroundTruth(d.box, d.class_id) for d in outcome.detections] for outcome in baseline]
    if not any(pseudo_truth):
        raise EvaluationError("the per-frame baseline produced no detections to measure against")
    scores = {}
    for k in sorted(set(k_values)):
        pipeline = Pipeline(config.with_toggles(key_interval=k), extractor=extractor, flow_estimator=flow_estimator)
        outcomes = pipeline.run(sequence.frames)
        scores[k] = evaluate_frame_map([o.detections for o in outcomes], pseudo_truth).mean_ap
    return scores


def _pixel_box(gt: GroundTruth, size):
    height, width = size
    b = gt.box
    return (round(b.x1 * width), round(b.y1 * height), round(b.x2 * width), round(b.y2 * height))


def export_sequence(sequence: SynthSequence, out_dir, progress: Callable | None = None) -> Path:
    """
    Write frame_NNNN.ppm files plus manifest.txt. Each manifest line is the
    frame index followed by class:x1,y1,x2,y2@vx,vy per object (pixels).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for index, (frame, truths) in enumerate(zip(sequence.frames, sequence.boxes)):
        write_pixmap(frame, out_dir / f"frame_{index:04d}.ppm")
        fields = [str(index)]
        for gt, obj in zip(truths, sequence.config.objects):
            x1, y1, x2, y2 = _pixel_box(gt, sequence.config.size)
            fields.append(f"{gt.class_id}:{x1},{y1},{x2},{y2}@{obj.velocity[0]},{obj.velocity[1]}")
        lines.append(" ".join(fields))
        if progress:
            progress(f"frame {index + 1}/{len(sequence)}")
    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


_MANIFEST_OBJECT = re.compile(r"^(\d+):(-?\d+),(-?\d+),(-?\d+),(-?\d+)@(-?\d+),(-?\d+)$")


def read_manifest(path, size) -> list:
    """Per frame, the list of GroundTruth boxes recorded in a manifest."""
    height, width = size
    frames = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        index, *objects = line.split()
        truths = []
        for token in objects:
            match = _MANIFEST_OBJECT.match(token)
            if not match:
                raise ConfigError(f"malformed manifest entry '{token}'", line=line_no)
            class_id, x1, y1, x2, y2 = (int(v) for v in match.groups()[:5])
            truths.append(GroundTruth(Box(x1 / width, y1 / height, x2 / width, y2 / height), class_id))
        frames.append(truths)
    return frames


def load_frames(directory) -> list:
    """Every frame_NNNN.ppm in a directory, in index order."""
    paths = sorted(Path(directory).glob("frame_*.ppm"))
    if not paths:
        raise FormatError(f"no frame_*.ppm files in {directory}", 0)
    return [read_pixmap(p) for p in paths]
