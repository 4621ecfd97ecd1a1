"""Frame-level mean average precision."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from flowprop import config as defaults
from flowprop.detect import Box, Detection, iou
from flowprop.errors import EvaluationError


@dataclass(frozen=True)
class GroundTruth:
    box: Box
    class_id: int


@dataclass(frozen=True)
class MapResult:
    per_class: dict  # class id -> AP
    mean_ap: float


def _as_frames(per_frame):
    if isinstance(per_frame, Mapping):
        return dict(per_frame)
    return dict(enumerate(per_frame))


def average_precision(recall, precision):
    """All-points interpolated area under the precision-recall curve."""
    r = np.concatenate([[0.0], recall, [1.0]])
    p = np.concatenate([[0.0], precision, [0.0]])
    p = np.maximum.accumulate(p[::-1])[::-1]
    steps = np.flatnonzero(r[1:] != r[:-1])
    return float(np.sum((r[steps + 1] - r[steps]) * p[steps + 1]))


def _class_ap(detections, truths, iou_threshold):
    """detections: [(frame, Detection)]; truths: frame -> [Box]."""
    total = sum(len(boxes) for boxes in truths.values())
    ranked = sorted(detections, key=lambda fd: (fd[1].sort_key(), fd[0]))
    matched = {frame: [False] * len(boxes) for frame, boxes in truths.items()}
    hits = np.zeros(len(ranked))
    for rank, (frame, det) in enumerate(ranked):
        best, best_iou = -1, iou_threshold
        for j, box in enumerate(truths.get(frame, ())):
            if matched[frame][j]:
                continue
            overlap = iou(det.box, box)
            if overlap >= best_iou:
                best, best_iou = j, overlap
        if best >= 0:
            matched[frame][best] = True
            hits[rank] = 1.0
    if not len(ranked):
        return 0.0
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    return average_precision(tp / total, tp / (tp + fp))


def evaluate_frame_map(detections: Sequence | Mapping, ground_truth: Sequence | Mapping,
                       iou_threshold: float = defaults.EVAL_IOU) -> MapResult:
    """
    Per-class AP over all frames, mean over the classes present in the ground truth.
    Both inputs are per-frame lists (or frame -> list mappings) of Detection / GroundTruth.
    """
    det_frames = _as_frames(detections)
    gt_frames = _as_frames(ground_truth)
    classes = sorted({gt.class_id for boxes in gt_frames.values() for gt in boxes})
    if not classes:
        raise EvaluationError("ground truth holds no objects; mAP is undefined")

    per_class = {}
    for class_id in classes:
        truths = {frame: [gt.box for gt in boxes if gt.class_id == class_id] for frame, boxes in gt_frames.items()}
        dets = [(frame, det) for frame, items in det_frames.items() for det in items
                if isinstance(det, Detection) and det.class_id == class_id]
        per_class[class_id] = _class_ap(dets, truths, iou_threshold)
    return MapResult(per_class=per_class, mean_ap=float(np.mean(list(per_class.values()))))
