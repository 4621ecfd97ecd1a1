"""
Throughput measurement over an exported synthetic sequence.

Every timed run reads the frames back from disk, so the measured frame
time covers loading plus the whole pipeline at batch size one. Each
configuration gets warm-up runs followed by timed repeats; the median
repeat is reported next to the cost model fitted from the same runs.
"""
from __future__ import annotations

import csv
import math
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from flowprop import config as defaults
from flowprop.config import validate_non_negative, validate_positive, validate_unit_interval
from flowprop.cost_model import CostModel, fit_cost_model, predicted_run_time
from flowprop.errors import ConfigError, EvaluationError
from flowprop.extractor import ToyExtractor
from flowprop.pipeline import PRESETS, Pipeline, PipelineConfig
from flowprop.pixmap import read_pixmap
from flowprop.synth import SynthSequence, approximation_error, detection_fidelity, export_sequence

ProgressFn = Callable[[str], None]


@dataclass(frozen=True)
class BenchConfig:
    variants: tuple = tuple(defaults.BENCH_VARIANTS)
    key_intervals: tuple = tuple(defaults.BENCH_KEY_INTERVALS)
    repeats: int = defaults.BENCH_REPEATS
    warmup: int = defaults.BENCH_WARMUP
    parallel: bool = False
    tolerance: float = defaults.CONSISTENCY_TOLERANCE

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "key_intervals", tuple(int(k) for k in self.key_intervals))
        for name in self.variants:
            if name not in PRESETS:
                raise ConfigError(f"unknown bench variant '{name}', expected one of {', '.join(PRESETS)}")
        if not self.key_intervals or min(self.key_intervals) < 1:
            raise ConfigError(f"key_intervals must be a non-empty list of integers >= 1, got {self.key_intervals}")
        validate_positive(self.repeats, "repeats")
        validate_non_negative(self.warmup, "warmup")
        validate_unit_interval(self.tolerance, "tolerance")


@dataclass
class BenchRow:
    variant: str
    key_interval: int
    frames: int
    measured_fps: float
    predicted_fps: float
    frame_time_ns: float
    predicted_frame_time_ns: float
    approximation_error: float
    extractor_calls: int
    cost_model: CostModel

    @property
    def deviation(self):
        """Relative gap between measured and predicted frame time."""
        return abs(self.frame_time_ns - self.predicted_frame_time_ns) / self.predicted_frame_time_ns

    def consistent(self, tolerance):
        return self.deviation <= tolerance


CSV_COLUMNS = ["variant", "key_interval", "frames", "measured_fps", "predicted_fps", "frame_time_ms",
               "predicted_frame_time_ms", "approximation_error", "extractor_calls"]


@dataclass
class BenchReport:
    rows: list
    tolerance: float = defaults.CONSISTENCY_TOLERANCE
    references: dict = field(default_factory=lambda: dict(defaults.REFERENCE_RESULTS))

    def row(self, variant, key_interval=None):
        for r in self.rows:
            if r.variant == variant and (key_interval is None or r.key_interval == key_interval):
                return r
        raise KeyError(f"no bench row for {variant} at k={key_interval}")

    def write_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([
                    r.variant, r.key_interval, r.frames, f"{r.measured_fps:.6f}", f"{r.predicted_fps:.6f}",
                    f"{r.frame_time_ns / 1e6:.6f}", f"{r.predicted_frame_time_ns / 1e6:.6f}",
                    f"{r.approximation_error:.6f}", r.extractor_calls,
                ])
        return path

    def format_lines(self):
        width = max([len(r.variant) for r in self.rows] + [12])
        lines = [
            f"{'Variant':<{width}}  {'k':>3}  {'FPS':>9}  {'Predicted':>9}  {'Error':>9}  {'Extracts':>8}",
            f"{'-' * width}  {'-' * 3}  {'-' * 9}  {'-' * 9}  {'-' * 9}  {'-' * 8}",
        ]
        for r in self.rows:
            mark = "✓" if r.consistent(self.tolerance) else "⚠"
            lines.append(f"{r.variant:<{width}}  {r.key_interval:>3}  {r.measured_fps:>9.2f}  "
                         f"{r.predicted_fps:>9.2f}  {r.approximation_error:>9.5f}  {r.extractor_calls:>8}  {mark}")
        lines.append("")
        lines.append("Published reference values (trained networks on a workstation GPU; not reproducible here):")
        for name, ref in self.references.items():
            lines.append(f"  {name:<{width}}  {ref['fps']:>5.0f} FPS  {ref['f_map']:.2f} F-mAP")
        lines.append("Frame time includes reading each frame from local disk as an 8-bit pixmap.")
        return lines


def _run_once(pipeline: Pipeline, paths):
    """One full pass; returns (wall ns, outcomes, per-frame load ns)."""
    pipeline.reset()
    outcomes, loads = [], []
    start = time.perf_counter_ns()
    for path in paths:
        t0 = time.perf_counter_ns()
        frame = read_pixmap(path)
        loads.append(time.perf_counter_ns() - t0)
        outcomes.append(pipeline.step(frame))
    return time.perf_counter_ns() - start, outcomes, loads


def measure_config(config: PipelineConfig, paths: Sequence[Path], bench: BenchConfig,
                   extractor=None, flow_estimator=None):
    """Median wall time over the timed repeats, the fitted cost model and the extractor call count."""
    pipeline = Pipeline(config, extractor=extractor or ToyExtractor(config.extractor), flow_estimator=flow_estimator)
    for _ in range(bench.warmup):
        _run_once(pipeline, paths)
    walls, outcomes, loads = [], [], []
    for _ in range(bench.repeats):
        wall, run_outcomes, run_loads = _run_once(pipeline, paths)
        walls.append(wall)
        outcomes.extend(run_outcomes)
        loads.extend(run_loads)
    walls.sort()
    # counts are reset per run, so this is one pass's extractions
    return walls[len(walls) // 2], fit_cost_model(outcomes, loads), pipeline.counts["extract"]


def bench_configs(base: PipelineConfig, bench: BenchConfig):
    """(variant, PipelineConfig) pairs; the per-frame baseline appears once."""
    configs = []
    for name in bench.variants:
        preset = PipelineConfig.preset(name, extractor=base.extractor, embed=base.embed, flow=base.flow, head=base.head)
        if not preset.enable_fa:
            configs.append((name, preset.with_toggles(key_interval=1)))
            continue
        for k in bench.key_intervals:
            configs.append((name, preset.with_toggles(key_interval=k)))
    return configs


def run_benchmark(base: PipelineConfig, sequence: SynthSequence, bench: BenchConfig, frames_dir=None,
                  extractor_factory: Callable | None = None, progress: ProgressFn | None = None) -> BenchReport:
    """
    Export the sequence, then time every configured variant over it.
    extractor_factory(config) may substitute the extractor, e.g. to inject a known cost.
    """
    with tempfile.TemporaryDirectory(prefix="flowprop-bench-") as scratch:
        frames_dir = Path(frames_dir or scratch)
        export_sequence(sequence, frames_dir)
        paths = sorted(frames_dir.glob("frame_*.ppm"))
        n = len(paths)

        def measure(item):
            name, cfg = item
            extractor = extractor_factory(cfg.extractor) if extractor_factory else None
            wall, model, calls = measure_config(cfg, paths, bench, extractor=extractor)
            if progress:
                progress(f"{name} k={cfg.key_interval}: {n * 1e9 / wall:.2f} FPS")
            return name, cfg, wall, model, calls

        configs = bench_configs(base, bench)
        if bench.parallel:
            with ThreadPoolExecutor(max_workers=len(configs)) as pool:
                measured = list(pool.map(measure, configs))
        else:
            measured = [measure(item) for item in configs]

    rows = []
    for name, cfg, wall, model, calls in measured:
        error = approximation_error(sequence, cfg, [cfg.key_interval])[cfg.key_interval] if cfg.enable_fa else 0.0
        frame_time = wall / n
        predicted = predicted_run_time(model, cfg, n) / n
        rows.append(BenchRow(
            variant=name, key_interval=cfg.key_interval, frames=n,
            measured_fps=1e9 / frame_time, predicted_fps=1e9 / predicted if predicted > 0 else math.inf,
            frame_time_ns=frame_time, predicted_frame_time_ns=predicted,
            approximation_error=error, extractor_calls=calls,
            cost_model=model,
        ))
    return BenchReport(rows=rows, tolerance=bench.tolerance)


@dataclass
class SweepResult:
    errors: dict  # k -> mean approximation error
    fidelity: dict  # k -> F-mAP against the per-frame baseline, empty when the baseline detects nothing
    fps: dict  # k -> measured FPS

    def write_csv(self, out_dir):
        out_dir = Path(out_dir)
        error_path = out_dir / "sweep_error.csv"
        with open(error_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["key_interval", "approximation_error", "f_map"])
            for k, error in self.errors.items():
                f_map = self.fidelity.get(k)
                writer.writerow([k, f"{error:.6f}", "" if f_map is None else f"{f_map:.6f}"])
        fps_path = out_dir / "sweep_fps.csv"
        with open(fps_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["key_interval", "measured_fps"])
            for k, fps in self.fps.items():
                writer.writerow([k, f"{fps:.6f}"])
        return error_path, fps_path


def run_sweep(base: PipelineConfig, sequence: SynthSequence, bench: BenchConfig,
              extractor_factory: Callable | None = None, progress: ProgressFn | None = None) -> SweepResult:
    """Approximation error, detection fidelity and FPS of `base` across the bench key intervals."""
    ks = sorted(bench.key_intervals)
    errors = approximation_error(sequence, base, ks)
    try:
        fidelity = detection_fidelity(sequence, base, ks)
    except EvaluationError:
        fidelity = {}
    single = BenchConfig(variants=(base.variant,), key_intervals=ks, repeats=bench.repeats,
                         warmup=bench.warmup, parallel=bench.parallel, tolerance=bench.tolerance)
    report = run_benchmark(base, sequence, single, extractor_factory=extractor_factory, progress=progress)
    fps = {r.key_interval: r.measured_fps for r in report.rows}
    return SweepResult(errors=errors, fidelity=fidelity, fps=fps)