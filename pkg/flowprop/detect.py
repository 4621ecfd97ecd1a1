"""
SSD-style multi-scale detection head stand-in.

An untrained, seeded linear projection per cell produces class logits and
box offsets for every anchor. Scores are logistic-squashed per class,
offsets are decoded against the anchors, and each class goes through
greedy NMS.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from flowprop import config as defaults
from flowprop.config import validate_positive, validate_unit_interval
from flowprop.errors import ConfigError, ContractError, FormatError
from flowprop.tensors import FeaturePyramid


@dataclass(frozen=True, order=True)
class Box:
    """Corner box in normalised image coordinates."""
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ContractError(f"box corners out of order: {self}")

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ContractError(f"detection score must lie in [0, 1], got {self.score}")

    def sort_key(self):
        return (-self.score, self.class_id, self.box.as_tuple())


@dataclass(frozen=True)
class HeadConfig:
    seed: int = defaults.HEAD_SEED
    num_classes: int = defaults.NUM_CLASSES
    anchors_per_cell: int = defaults.ANCHORS_PER_CELL
    score_threshold: float = defaults.SCORE_THRESHOLD
    nms_iou: float = defaults.NMS_IOU
    top_k: int = defaults.TOP_K
    max_detections: int = defaults.MAX_DETECTIONS
    bias: float = 0.0
    offset_scale: float = 0.1  # multiplies raw offset outputs, like SSD box variances

    def __post_init__(self):
        validate_positive(self.num_classes, "num_classes")
        validate_positive(self.top_k, "top_k")
        validate_positive(self.max_detections, "max_detections")
        if not 1 <= self.anchors_per_cell <= 6:
            raise ConfigError(f"anchors_per_cell must lie in [1, 6], got {self.anchors_per_cell}")
        validate_unit_interval(self.score_threshold, "score_threshold")
        validate_unit_interval(self.nms_iou, "nms_iou")


@dataclass(frozen=True)
class AnchorGrid:
    """Per level, an (H * W * A, 4) array of (cx, cy, w, h); cells row-major, anchors innermost."""
    levels: tuple
    dims: tuple  # (H, W) per level
    anchors_per_cell: int

    def __len__(self):
        return len(self.levels)

    @property
    def count(self):
        return sum(len(level) for level in self.levels)


def anchor_scales(num_levels, s_min=0.1, s_max=0.9):
    """num_levels + 1 linearly spaced scales; the extra one sizes the last level's second square anchor."""
    if num_levels == 1:
        return [s_min, s_max]
    step = (s_max - s_min) / (num_levels - 1)
    return [s_min + step * i for i in range(num_levels + 1)]


def _cell_shapes(scale, next_scale, count):
    shapes = [(scale, scale), (math.sqrt(scale * next_scale),) * 2]
    for ratio in (2.0, 3.0):
        root = math.sqrt(ratio)
        shapes.append((scale * root, scale / root))
        shapes.append((scale / root, scale * root))
    return shapes[:count]


def build_anchor_grid(dims: Sequence, anchors_per_cell=defaults.ANCHORS_PER_CELL) -> AnchorGrid:
    """Tile anchors over every level's cells; dims are (H, W[, C]) per level."""
    scales = anchor_scales(len(dims))
    levels = []
    for index, level_dims in enumerate(dims):
        h, w = int(level_dims[0]), int(level_dims[1])
        ys, xs = np.mgrid[0:h, 0:w]
        centres = np.stack([(xs + 0.5) / w, (ys + 0.5) / h], axis=-1).reshape(-1, 1, 2)
        shapes = np.array(_cell_shapes(scales[index], scales[index + 1], anchors_per_cell)).reshape(1, -1, 2)
        anchors = np.concatenate(np.broadcast_arrays(centres, shapes), axis=-1).reshape(-1, 4)
        anchors.flags.writeable = False
        levels.append(anchors)
    return AnchorGrid(tuple(levels), tuple((int(d[0]), int(d[1])) for d in dims), anchors_per_cell)


def decode_boxes(offsets, anchors):
    """(tx, ty, tw, th) against (cx, cy, w, h) anchors -> (x1, y1, x2, y2)."""
    offsets = np.asarray(offsets, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    centre = anchors[:, :2] + offsets[:, :2] * anchors[:, 2:]
    size = anchors[:, 2:] * np.exp(offsets[:, 2:])
    return np.concatenate([centre - size / 2, centre + size / 2], axis=1)


def encode_boxes(boxes, anchors):
    """Inverse of decode_boxes."""
    boxes = np.asarray(boxes, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    size = boxes[:, 2:] - boxes[:, :2]
    centre = (boxes[:, :2] + boxes[:, 2:]) / 2
    return np.concatenate([(centre - anchors[:, :2]) / anchors[:, 2:], np.log(size / anchors[:, 2:])], axis=1)


@lru_cache(maxsize=32)
def _head_weights(seed, level, channels, outputs):
    rng = np.random.default_rng([seed, level, channels])
    weights = rng.standard_normal((channels, outputs)) / np.sqrt(channels)
    weights.flags.writeable = False
    return weights


def iou(a: Box, b: Box) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray):
    """Pairwise IoU of (N, 4) and (M, 4) corner arrays."""
    lo = np.maximum(boxes_a[:, None, :2], boxes_b[None, :, :2])
    hi = np.minimum(boxes_a[:, None, 2:], boxes_b[None, :, 2:])
    inter = np.prod(np.clip(hi - lo, 0.0, None), axis=-1)
    area_a = np.prod(boxes_a[:, 2:] - boxes_a[:, :2], axis=-1)
    area_b = np.prod(boxes_b[:, 2:] - boxes_b[:, :2], axis=-1)
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def nms(detections: Iterable[Detection], iou_threshold: float) -> list:
    """
    Greedy per-class suppression in (score desc, class id, box) order.
    A detection is dropped when it overlaps a kept one of its class by more than iou_threshold.
    """
    ordered = sorted(detections, key=Detection.sort_key)
    by_class = {}
    for det in ordered:
        by_class.setdefault(det.class_id, []).append(det)

    kept = []
    for group in by_class.values():
        boxes = np.array([d.box.as_tuple() for d in group])
        overlaps = iou_matrix(boxes, boxes)
        alive = np.ones(len(group), dtype=bool)
        for i in range(len(group)):
            if not alive[i]:
                continue
            kept.append(group[i])
            alive[i + 1:] &= overlaps[i, i + 1:] <= iou_threshold
    return sorted(kept, key=Detection.sort_key)


def predict(pyramid: FeaturePyramid, head: HeadConfig, anchors: AnchorGrid) -> list:
    """Score and decode every anchor, threshold, keep top_k per class, then NMS."""
    if len(pyramid) != len(anchors):
        raise ContractError(f"predict: pyramid has {len(pyramid)} levels, anchor grid has {len(anchors)}")
    k, a = head.num_classes, anchors.anchors_per_cell
    all_scores, all_boxes = [], []
    for index, feature in enumerate(pyramid):
        if (feature.height, feature.width) != anchors.dims[index]:
            raise ContractError(
                f"predict: level {index} grid {(feature.height, feature.width)} does not match anchors "
                f"{anchors.dims[index]}")
        weights = _head_weights(head.seed, index, feature.channels, a * (k + 4))
        cells = feature.data.reshape(-1, feature.channels).astype(np.float64)
        out = (cells @ weights + head.bias).reshape(-1, k + 4)
        all_scores.append(expit(out[:, :k]))
        all_boxes.append(decode_boxes(out[:, k:] * head.offset_scale, anchors.levels[index]))
    scores = np.concatenate(all_scores)
    boxes = np.clip(np.concatenate(all_boxes), 0.0, 1.0)

    candidates = []
    for class_id in range(k):
        hits = np.flatnonzero(scores[:, class_id] >= head.score_threshold)
        if hits.size == 0:
            continue
        order = hits[np.argsort(-scores[hits, class_id], kind="stable")][:head.top_k]
        for i in order:
            candidates.append(Detection(Box(*boxes[i]), class_id, float(scores[i, class_id])))
    return nms(candidates, head.nms_iou)[:head.max_detections]


class DetectionHead:
    """Callable detector bound to a head config and an anchor grid."""

    def __init__(self, head: HeadConfig, dims: Sequence):
        self.head = head
        self.anchors = build_anchor_grid(dims, head.anchors_per_cell)

    def __call__(self, pyramid: FeaturePyramid) -> list:
        return predict(pyramid, self.head, self.anchors)


CSV_COLUMNS = ["frame_index", "class_id", "score", "x1", "y1", "x2", "y2"]


def write_detections_csv(per_frame: Sequence[Sequence[Detection]], path):
    """One row per detection; floats as 6-decimal fixed point."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for frame_index, detections in enumerate(per_frame):
            for det in detections:
                writer.writerow([frame_index, det.class_id, f"{det.score:.6f}",
                                 *(f"{v:.6f}" for v in det.box.as_tuple())])
    return path


def read_detections_csv(path) -> dict:
    """frame_index -> list of Detection."""
    frames = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise FormatError(f"unexpected detection CSV header {header}", 0)
        for row in reader:
            frame, class_id, score, *coords = row
            det = Detection(Box(*(float(v) for v in coords)), int(class_id), float(score))
            frames.setdefault(int(frame), []).append(det)
    return frames
