from collections import Counter

import numpy as np
import pytest

from flowprop.errors import ConfigError, ContractError, SamplingError
from flowprop.extractor import ToyExtractor
from flowprop.pipeline import FrameRole, Pipeline, PipelineConfig, frame_role, triplet_forward
from flowprop.sampling import (
    TrainingTriplet, evaluation_frames, make_triplet, sample_clip_frames, select_training_triplet,
)
from flowprop.tensors import Image
from flowprop.synth import SynthConfig, default_objects, generate_sequence


class CountingExtractor:
    def __init__(self, config):
        self.inner = ToyExtractor(config)
        self.calls = 0

    def __call__(self, image):
        self.calls += 1
        return self.inner(image)


def _frames(count, size=(32, 32), velocity=(1, 0)):
    objects = default_objects(size, count=1, object_size=(8, 8), velocity=velocity)
    return generate_sequence(SynthConfig(size=size, frames=count, objects=objects)).frames


def test_roles_for_interval_ten():
    roles = [frame_role(i, 10) for i in range(22)]
    assert roles[0] is FrameRole.INITIAL
    assert [i for i, r in enumerate(roles) if r is FrameRole.KEY] == [10, 20]
    assert roles.count(FrameRole.NON_KEY) == 19


def test_every_frame_is_key_at_interval_one():
    assert [frame_role(i, 1) for i in range(4)] == [FrameRole.INITIAL] + [FrameRole.KEY] * 3


@pytest.mark.parametrize("k", [0, -3, 2.5])
def test_invalid_key_interval(k):
    with pytest.raises(ConfigError):
        PipelineConfig(key_interval=k)


def test_memory_aggregation_requires_approximation():
    with pytest.raises(ConfigError):
        PipelineConfig(enable_fa=False, enable_ma=True)
    assert not PipelineConfig().with_toggles(fa=False).enable_ma


def test_presets_round_trip_to_variant_names():
    for name in ("ssd", "fa", "fa+scale", "fa+ma", "fa+scale+ma"):
        assert PipelineConfig.preset(name).variant == name
    with pytest.raises(ConfigError):
        PipelineConfig.preset("yolo")


def test_extraction_count_over_long_sequence(small_pipeline_config):
    frames = _frames(101, velocity=(0, 0))
    extractor = CountingExtractor(small_pipeline_config.extractor)
    pipeline = Pipeline(small_pipeline_config, extractor=extractor)
    outcomes = pipeline.run(frames)
    assert extractor.calls == 11
    assert pipeline.counts["extract"] == 11
    assert pipeline.counts["detect"] == 101
    assert Counter(o.role for o in outcomes) == {FrameRole.INITIAL: 1, FrameRole.KEY: 10, FrameRole.NON_KEY: 90}


def test_baseline_extracts_every_frame_and_still_reports_roles(small_pipeline_config):
    pipeline = Pipeline(small_pipeline_config.with_toggles(fa=False))
    outcomes = pipeline.run(_frames(12))
    assert pipeline.counts["extract"] == 12
    assert pipeline.counts["flow"] == 0
    assert outcomes[10].role is FrameRole.KEY and outcomes[3].role is FrameRole.NON_KEY


def test_key_frames_with_aggregation_estimate_flow(small_pipeline_config):
    pipeline = Pipeline(small_pipeline_config)
    pipeline.run(_frames(21, velocity=(0, 0)))
    # 18 non-key frames plus the two key frames that aggregate
    assert pipeline.counts["flow"] == 20
    assert pipeline.counts["aggregate"] == 2 * 3


def test_interval_one_without_aggregation_matches_baseline(small_pipeline_config):
    frames = _frames(6)
    fa = Pipeline(small_pipeline_config.with_toggles(key_interval=1, ma=False)).run(frames)
    ssd = Pipeline(small_pipeline_config.with_toggles(fa=False)).run(frames)
    for a, b in zip(fa, ssd):
        assert a.detections == b.detections
        assert all(x == y for x, y in zip(a.pyramid, b.pyramid))


def test_static_video_features_never_change(small_pipeline_config, static_sequence):
    outcomes = Pipeline(small_pipeline_config.with_toggles(key_interval=4)).run(static_sequence.frames)
    first = outcomes[0]
    for outcome in outcomes[1:]:
        assert outcome.detections == first.detections
        for a, b in zip(outcome.pyramid, first.pyramid):
            np.testing.assert_allclose(a.data, b.data, atol=1e-6)


def test_static_video_detections_agree_across_variants(small_pipeline_config, static_sequence):
    baseline = Pipeline(small_pipeline_config.with_toggles(fa=False, key_interval=1)).run(static_sequence.frames)
    expected = baseline[0].detections
    assert all(outcome.detections == expected for outcome in baseline)
    for fa, scale, ma in [(True, False, False), (True, True, False), (True, False, True), (True, True, True)]:
        config = small_pipeline_config.with_toggles(key_interval=4, fa=fa, scale=scale, ma=ma)
        outcomes = Pipeline(config).run(static_sequence.frames)
        assert [o.detections for o in outcomes] == [expected] * len(outcomes), config.variant


def test_non_key_frames_report_masks_and_timings(small_pipeline_config):
    outcomes = Pipeline(small_pipeline_config).run(_frames(3))
    assert outcomes[0].masks is None
    assert len(outcomes[1].masks) == 3
    assert {"flow", "warp", "detect"} <= set(outcomes[1].timings)
    assert "extract" in outcomes[0].timings


def test_reset_starts_a_new_stream(small_pipeline_config):
    pipeline = Pipeline(small_pipeline_config)
    frames = _frames(3)
    pipeline.run(frames)
    pipeline.reset()
    assert pipeline.frame_index == 0 and not pipeline.counts
    assert pipeline.step(frames[0]).role is FrameRole.INITIAL


def test_frame_size_mismatch(small_pipeline_config):
    with pytest.raises(ContractError):
        Pipeline(small_pipeline_config).step(Image(np.zeros((16, 16, 3))))


def test_triplet_forward_has_extractor_dims(small_pipeline_config):
    frames = _frames(30, velocity=(0, 0))
    pyramid = triplet_forward(frames, make_triplet(25, 10), small_pipeline_config)
    assert pyramid.dims == list(small_pipeline_config.extractor.level_dims)
    with pytest.raises(ContractError):
        triplet_forward(frames[:20], make_triplet(25, 10), small_pipeline_config)


@pytest.mark.parametrize("target, offset, expected", [
    (25, 10, (5, 15, 25)),
    (25, 0, (15, 25, 25)),
    (12, 10, (0, 10, 12)),
])
def test_make_triplet(target, offset, expected):
    assert make_triplet(target, offset, 10).as_tuple() == expected


def test_invalid_triplets():
    with pytest.raises(SamplingError):
        TrainingTriplet(5, 5, 6)
    with pytest.raises(SamplingError):
        make_triplet(5, 0, 10)
    with pytest.raises(SamplingError):
        select_training_triplet(10, 10, 10)


def test_sampled_triplets_are_ordered(rng):
    for _ in range(2000):
        t = select_training_triplet(40, 10, 10, rng)
        assert 0 <= t.mem < t.key <= t.target < 40
        assert t.key - t.mem == 10
        assert 0 <= t.target - t.key <= 10


def test_short_clip_clamps_key(rng):
    targets = {select_training_triplet(15, 10, 10, rng).key for _ in range(500)}
    assert min(targets) >= 10


def test_clip_frames_long_clip():
    assert sample_clip_frames(150, 15) == [0, 11, 21, 32, 43, 53, 64, 75, 85, 96, 107, 117, 128, 139, 149]


def test_clip_frames_short_clips():
    assert sample_clip_frames(15, 15) == list(range(15))
    assert sample_clip_frames(5, 15) == [0, 1, 2, 3, 4]
    assert sample_clip_frames(1, 15) == [0]


def test_evaluation_frame_counts():
    assert len(evaluation_frames(40)) == 10
    assert len(evaluation_frames(41)) == 15
