"""
Analytic per-frame cost of the pipeline variants.

With feature approximation on, a key frame costs
    c_feat + c_det  (+ c_flow + 2 c_embed + c_agg with memory aggregation)
and a non-key frame costs c_flow + c_warp + c_det. Frame loading (c_load)
is paid by every frame.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Sequence

from flowprop.errors import ConfigError
from flowprop.pipeline import FrameOutcome, FrameRole, PipelineConfig, frame_role
from flowprop.timing import median_ns


@dataclass(frozen=True)
class CostModel:
    """Nanoseconds per invocation of each sub-network."""
    c_feat: float
    c_flow: float
    c_warp: float
    c_embed: float
    c_agg: float
    c_det: float
    c_load: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"{f.name} must be >= 0, got {getattr(self, f.name)}")

    def key_time(self, ma):
        cost = self.c_feat + self.c_det
        if ma:
            cost += self.c_flow + 2 * self.c_embed + self.c_agg
        return cost

    def non_key_time(self):
        return self.c_flow + self.c_warp + self.c_det

    def baseline_time(self):
        return self.c_feat + self.c_det


def predicted_frame_time(model: CostModel, config: PipelineConfig) -> float:
    """Steady-state amortised ns per frame."""
    if not config.enable_fa:
        return model.baseline_time() + model.c_load
    k = config.key_interval
    return (model.key_time(config.enable_ma) + (k - 1) * model.non_key_time()) / k + model.c_load


def predicted_run_time(model: CostModel, config: PipelineConfig, n_frames: int) -> float:
    """Total ns for a finite run, counting each frame's actual role."""
    if not config.enable_fa:
        return n_frames * (model.baseline_time() + model.c_load)
    per_role = {
        FrameRole.INITIAL: model.baseline_time(),
        FrameRole.KEY: model.key_time(config.enable_ma),
        FrameRole.NON_KEY: model.non_key_time(),
    }
    total = sum(per_role[frame_role(i, config.key_interval)] for i in range(n_frames))
    return total + n_frames * model.c_load


def breakeven_interval(model: CostModel, ma: bool, max_interval: int = 1000):
    """Smallest k at which the approximated pipeline beats per-frame extraction, or None."""
    baseline = model.baseline_time()
    for k in range(1, max_interval + 1):
        if predicted_frame_time(model, PipelineConfig(key_interval=k, enable_ma=ma)) - model.c_load < baseline:
            return k
    return None


def fit_cost_model(outcomes: Iterable[FrameOutcome], load_times: Sequence[float] = ()) -> CostModel:
    """
    Per-op medians of recorded stage timings. The embed stage of a key frame
    covers two embeddings, so c_embed is half of its median.
    """
    samples = {name: [] for name in ("extract", "flow", "warp", "embed", "aggregate", "detect")}
    for outcome in outcomes:
        for name, value in outcome.timings.items():
            if name in samples:
                samples[name].append(value)
    return CostModel(
        c_feat=median_ns(samples["extract"]),
        c_flow=median_ns(samples["flow"]),
        c_warp=median_ns(samples["warp"]),
        c_embed=median_ns(samples["embed"]) / 2,
        c_agg=median_ns(samples["aggregate"]),
        c_det=median_ns(samples["detect"]),
        c_load=median_ns(load_times),
    )
