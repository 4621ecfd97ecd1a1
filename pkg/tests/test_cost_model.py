import pytest

from flowprop.cost_model import (
    CostModel, breakeven_interval, fit_cost_model, predicted_frame_time, predicted_run_time,
)
from flowprop.errors import ConfigError
from flowprop.pipeline import FrameOutcome, FrameRole, PipelineConfig

MODEL = CostModel(c_feat=100, c_flow=5, c_warp=1, c_embed=20, c_agg=5, c_det=10)


def test_amortised_time_without_aggregation():
    config = PipelineConfig(key_interval=10, enable_ma=False)
    assert predicted_frame_time(MODEL, config) == pytest.approx(25.4)
    assert MODEL.baseline_time() / predicted_frame_time(MODEL, config) == pytest.approx(4.33, abs=0.01)


def test_aggregation_adds_to_key_frames_only():
    assert MODEL.key_time(ma=True) == 100 + 10 + 5 + 2 * 20 + 5
    config = PipelineConfig(key_interval=10, enable_ma=True)
    assert predicted_frame_time(MODEL, config) == pytest.approx((160 + 9 * 16) / 10)


def test_interval_one_costs_the_baseline():
    assert predicted_frame_time(MODEL, PipelineConfig(key_interval=1, enable_ma=False)) == MODEL.baseline_time()


def test_baseline_ignores_interval():
    assert predicted_frame_time(MODEL, PipelineConfig(key_interval=7).with_toggles(fa=False)) == 110


def test_long_intervals_approach_non_key_cost():
    times = [predicted_frame_time(MODEL, PipelineConfig(key_interval=k, enable_ma=False)) for k in (10, 100, 1000)]
    assert times == sorted(times, reverse=True)
    assert times[-1] == pytest.approx(MODEL.non_key_time(), rel=0.01)


def test_finite_run_counts_roles():
    config = PipelineConfig(key_interval=10, enable_ma=False)
    model = CostModel(c_feat=100, c_flow=5, c_warp=1, c_embed=0, c_agg=0, c_det=10, c_load=2)
    assert predicted_run_time(model, config, 11) == 110 + 9 * 16 + 110 + 11 * 2


def test_breakeven():
    assert breakeven_interval(MODEL, ma=False) == 2
    assert breakeven_interval(MODEL, ma=True) == 2
    slow_flow = CostModel(c_feat=100, c_flow=100, c_warp=1, c_embed=0, c_agg=0, c_det=10)
    assert breakeven_interval(slow_flow, ma=False) is None


def test_negative_costs_are_rejected():
    with pytest.raises(ConfigError):
        CostModel(c_feat=-1, c_flow=0, c_warp=0, c_embed=0, c_agg=0, c_det=0)


def test_fit_takes_stage_medians():
    outcomes = [
        FrameOutcome(0, FrameRole.INITIAL, [], {"extract": 100, "detect": 10}, None),
        FrameOutcome(1, FrameRole.NON_KEY, [], {"flow": 4, "warp": 1, "detect": 12}, None),
        FrameOutcome(2, FrameRole.KEY, [], {"extract": 120, "flow": 6, "embed": 40, "aggregate": 5, "detect": 11}, None),
    ]
    model = fit_cost_model(outcomes, load_times=[3, 5, 4])
    assert model == CostModel(c_feat=110, c_flow=5, c_warp=1, c_embed=20, c_agg=5, c_det=11, c_load=4)


def test_fit_without_samples_is_zero():
    assert fit_cost_model([]).baseline_time() == 0.0
