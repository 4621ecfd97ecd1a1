"""
Slow reference implementations.

Each oracle computes the same quantity as a production kernel, written
the most literal way possible. The test suite and `flowprop verify`
compare the two.
"""
from __future__ import annotations

import numpy as np

from flowprop.detect import Detection, iou
from flowprop.tensors import FeatureMap, FlowField


def bilinear_kernel(q, s):
    return max(0.0, 1.0 - abs(q[0] - s[0])) * max(0.0, 1.0 - abs(q[1] - s[1]))


def warp_all_pairs(key_feature: FeatureMap, flow: FlowField):
    """out(p, c) = sum over every grid cell q of G(q, p + flow(p)) * key(q, c)."""
    h, w, c = key_feature.shape
    key = key_feature.data.astype(np.float64)
    out = np.zeros((h, w, c))
    for py in range(h):
        for px in range(w):
            s = (px + flow.data[py, px, 0], py + flow.data[py, px, 1])
            for qy in range(h):
                for qx in range(w):
                    g = bilinear_kernel((qx, qy), s)
                    if g:
                        out[py, px] += g * key[qy, qx]
    return out


def aggregate_elementwise(memory, current, w_mem, w_cur):
    """w_mem(p) * memory(p, c) + w_cur(p) * current(p, c), one element at a time."""
    h, w, c = memory.shape
    out = np.zeros((h, w, c))
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                out[y, x, ch] = w_mem[y, x] * memory[y, x, ch] + w_cur[y, x] * current[y, x, ch]
    return out


def nms_brute_force(detections, iou_threshold):
    """Keep a detection unless an earlier kept one of its class overlaps it by more than the threshold."""
    kept = []
    for det in sorted(detections, key=Detection.sort_key):
        if all(k.class_id != det.class_id or iou(k.box, det.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept
