"""
In-repo acceptance runner: named oracle checks, each reported ✓ / ✗, then a
pass/fail tally. Exit status is non-zero when any check fails.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import chisquare

from flowprop.aggregation import EmbeddingConfig, WeightPair, aggregate_features, aggregate_pyramid, similarity_weights
from flowprop.console import Console, GREEN, RED, RESET
from flowprop.detect import Box, Detection, nms
from flowprop.evaluate import GroundTruth, evaluate_frame_map
from flowprop.flow import identity_flow_pyramid
from flowprop.gradcheck import check_warp_gradients, random_instance
from flowprop.oracles import nms_brute_force, warp_all_pairs
from flowprop.pipeline import FrameRole, Pipeline, PipelineConfig
from flowprop.sampling import select_training_triplet
from flowprop.synth import SynthConfig, default_objects, generate_sequence, synth_extractor_config, synth_flow_config
from flowprop.tensors import FeatureMap, FeaturePyramid, FlowField
from flowprop.warp import warp_feature


def check_warp_oracle(rng, instances=1000):
    worst = 0.0
    for _ in range(instances):
        h, w = rng.integers(1, 7, size=2)
        c = int(rng.integers(1, 4))
        key = FeatureMap(rng.standard_normal((h, w, c)))
        flow = FlowField(rng.uniform(-2.5, 2.5, size=(h, w, 2)))
        got = warp_feature(key, flow).warped.data
        worst = max(worst, float(np.max(np.abs(got - warp_all_pairs(key, flow)))))
    key = FeatureMap(rng.standard_normal((6, 6, 3)))
    identity = warp_feature(key, FlowField.zeros(6, 6)).warped == key
    return worst <= 1e-6 and identity, f"max deviation {worst:.2e}, zero-flow identity {'exact' if identity else 'broken'}"


def check_gradients(rng, instances=100):
    worst = max(check_warp_gradients(*random_instance(rng)).max_error for _ in range(instances))
    return worst <= 1e-3, f"max relative error {worst:.2e}"


def check_aggregation(rng):
    failures = []
    for _ in range(200):
        h, w, c = rng.integers(1, 4, size=3)
        mem = FeatureMap(rng.standard_normal((h, w, c)))
        cur = FeatureMap(rng.standard_normal((h, w, c)))
        e_mem = FeatureMap(rng.standard_normal((h, w, 4)))
        e_cur = FeatureMap(rng.standard_normal((h, w, 4)))
        weights = similarity_weights(e_mem, e_cur)
        if np.max(np.abs(weights.w_mem + weights.w_cur - 1.0)) > 1e-6:
            failures.append("normalization")
        out = aggregate_features(mem, cur, weights).data
        lo, hi = np.minimum(mem.data, cur.data), np.maximum(mem.data, cur.data)
        if np.any(out < lo) or np.any(out > hi):
            failures.append("convexity")
    feature = FeatureMap(rng.standard_normal((4, 4, 4)))
    pyramid = FeaturePyramid((feature,))
    fused = aggregate_pyramid(pyramid, pyramid, identity_flow_pyramid(pyramid.dims), EmbeddingConfig())
    if fused[0] != feature:
        failures.append("idempotence")
    orthogonal = similarity_weights(FeatureMap(np.array([[[1.0, 0.0]]])), FeatureMap(np.array([[[0.0, 1.0]]])))
    if abs(orthogonal.w_mem[0, 0] - 0.2689) > 1e-4 or abs(orthogonal.w_cur[0, 0] - 0.7311) > 1e-4:
        failures.append("orthogonal weights")
    same = aggregate_features(feature, feature, WeightPair(np.full((4, 4), 0.3), np.full((4, 4), 0.7)))
    if same != feature:
        failures.append("fixed point")
    failures = sorted(set(failures))
    return not failures, "all contracts hold" if not failures else f"violated: {', '.join(failures)}"


def check_pipeline_accounting(rng, frames=101, key_interval=10):
    size = (32, 32)
    extractor = synth_extractor_config(size, channels=4, num_levels=3)
    objects = default_objects(size, count=1, object_size=(8, 8), velocity=(0, 0))
    sequence = generate_sequence(SynthConfig(size=size, frames=frames, objects=objects))
    base = PipelineConfig(key_interval=key_interval, extractor=extractor, flow=synth_flow_config(search_radius=2))
    calls = {}
    roles = None
    for fa in (True, False):
        pipeline = Pipeline(base.with_toggles(fa=fa))
        outcomes = pipeline.run(sequence.frames)
        calls[fa] = pipeline.counts["extract"]
        if fa:
            roles = [o.role for o in outcomes]
    expected = [FrameRole.INITIAL] + ([FrameRole.NON_KEY] * (key_interval - 1) + [FrameRole.KEY]) * (
        (frames - 1) // key_interval)
    ok = roles == expected and calls[True] == -(-frames // key_interval) and calls[False] == frames
    return ok, f"{calls[True]} extractions with approximation, {calls[False]} without"


def check_nms_and_map(rng, instances=1000):
    mismatches = 0
    for _ in range(instances):
        corners = rng.uniform(0, 1, size=(50, 4))
        boxes = np.concatenate([np.minimum(corners[:, :2], corners[:, 2:]),
                                np.maximum(corners[:, :2], corners[:, 2:])], axis=1)
        dets = [Detection(Box(*b), int(rng.integers(0, 3)), float(s))
                for b, s in zip(boxes, rng.uniform(0, 1, 50))]
        if nms(dets, 0.45) != nms_brute_force(dets, 0.45):
            mismatches += 1
    gt = [[GroundTruth(Box(0.1, 0.1, 0.3, 0.3), 0), GroundTruth(Box(0.6, 0.6, 0.9, 0.9), 0)]]
    half = evaluate_frame_map([[Detection(Box(0.1, 0.1, 0.3, 0.3), 0, 0.9),
                                Detection(Box(0.4, 0.0, 0.5, 0.1), 0, 0.8)]], gt).mean_ap
    perfect = evaluate_frame_map([[Detection(g.box, g.class_id, 1.0) for g in gt[0]]], gt).mean_ap
    ok = mismatches == 0 and abs(half - 0.5) < 1e-12 and abs(perfect - 1.0) < 1e-12
    return ok, f"{mismatches} NMS mismatches, AP fixtures {half:.3f} / {perfect:.3f}"


def check_sampler(rng, samples=100_000, clip_length=40):
    offsets = np.zeros(11, dtype=np.int64)
    for _ in range(samples):
        t = select_training_triplet(clip_length, 10, 10, rng)
        if not 0 <= t.mem < t.key <= t.target < clip_length:
            return False, f"invalid triplet {t.as_tuple()}"
        offsets[t.target - t.key] += 1
    p_value = chisquare(offsets).pvalue
    return p_value > 0.01, f"offset uniformity p = {p_value:.3f}"


CHECKS = [
    ("Warp equals all-pairs sum", check_warp_oracle),
    ("Warp gradients match finite differences", check_gradients),
    ("Aggregation contracts", check_aggregation),
    ("Role periodicity and extraction count", check_pipeline_accounting),
    ("NMS and mAP oracles", check_nms_and_map),
    ("Training triplet sampler", check_sampler),
]


def run_checks(console: Console, seed=0, checks=CHECKS):
    """Run every check; returns (passed, failed)."""
    passed = failed = 0
    for name, check in checks:
        console.print(f"  Testing: {name}")
        ok, detail = check(np.random.default_rng(seed))
        if ok:
            console.print(f"  {GREEN}✓{RESET} {name} ({detail})")
            passed += 1
        else:
            console.print(f"  {RED}✗{RESET} {name} ({detail})")
            failed += 1

    console.print("")
    if failed == 0:
        console.print(f"{GREEN}========================================{RESET}")
        console.print(f"{GREEN}✓ All {passed} checks passed!{RESET}")
        console.print(f"{GREEN}========================================{RESET}")
    else:
        console.print(f"{RED}========================================{RESET}")
        console.print(f"{RED}✗ {failed} check(s) failed{RESET}")
        console.print(f"{GREEN}✓ {passed} check(s) passed{RESET}")
        console.print(f"{RED}========================================{RESET}")
    return passed, failed
