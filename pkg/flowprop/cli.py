"""
flowprop command line.

Every command runs as a list of timed steps, prints a summary table at the
end (also on failure) and writes a timestamped log under <out>/logs/.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from flowprop import __version__
from flowprop.bench import run_benchmark, run_sweep
from flowprop.config import load_config
from flowprop.console import BOLD, RESET, Console, StepResult
from flowprop.detect import write_detections_csv
from flowprop.errors import FlowpropError
from flowprop.pipeline import Pipeline
from flowprop.settings import RunConfig
from flowprop.synth import export_sequence, generate_sequence, load_frames
from flowprop.verify import run_checks

DEFAULT_OUT = "out"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowprop",
        description="Sparse key-frame video detection with flow-guided feature propagation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Run the pipeline over a generated sequence, key frame every 10 frames
  flowprop run --key-interval 10

  # Per-frame baseline for comparison
  flowprop run --no-fa

  # Throughput of every variant, settings from a file
  flowprop bench --config configs/default.ini --out results/

  # Error and FPS against the key-frame interval
  flowprop sweep

  # Export a sequence as pixmaps plus manifest
  flowprop synth --seed 3 --out frames/

  # Oracle acceptance checks
  flowprop verify
        """,
    )
    parser.add_argument("--version", action="version", version=f"flowprop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run the pipeline over a sequence and write detections"),
        ("bench", "measure throughput of each variant"),
        ("sweep", "approximation error and FPS against the key-frame interval"),
        ("synth", "generate and export a synthetic sequence"),
        ("verify", "run the oracle acceptance checks"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="config file (INI sections [extractor] [flow] [pipeline] ...)")
        cmd.add_argument("--seed", type=int, help="sequence seed (overrides [synth] seed)")
        cmd.add_argument("--out", default=DEFAULT_OUT, help=f"output directory (default: {DEFAULT_OUT})")
        if name in ("run", "bench", "sweep"):
            cmd.add_argument("--key-interval", type=int, help="frames between key frames")
            cmd.add_argument("--no-fa", action="store_true", help="extract every frame (per-frame baseline)")
            cmd.add_argument("--no-ma", action="store_true", help="disable memory aggregation at key frames")
            cmd.add_argument("--no-scale-map", action="store_true", help="skip scale-map refinement")
        if name == "run":
            cmd.add_argument("--frames", help="directory of frame_NNNN.ppm files to run on instead of a generated sequence")
        if name == "bench":
            cmd.add_argument("--parallel", action="store_true", help="time configurations on parallel threads")
    return parser


def resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    return config.with_overrides(
        seed=args.seed,
        key_interval=getattr(args, "key_interval", None),
        fa=False if getattr(args, "no_fa", False) else None,
        ma=False if getattr(args, "no_ma", False) else None,
        scale=False if getattr(args, "no_scale_map", False) else None,
    )


def _write_roles(outcomes, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame_index", "role", "detections"])
        for o in outcomes:
            writer.writerow([o.index, o.role.value, len(o.detections)])
    return path


def cmd_run(args, console, config, out_dir):
    if args.frames:
        frames = console.run_step("Load frames", load_frames, args.frames)
    else:
        frames = console.run_step("Generate sequence", lambda: generate_sequence(config.synth).frames)
    pipeline = Pipeline(config.pipeline)
    outcomes = console.run_step("Run pipeline", pipeline.run, frames)
    console.print(f"  variant {config.pipeline.variant}, k={config.pipeline.key_interval}: "
                  f"{pipeline.counts['extract']} extractions over {len(frames)} frames")
    path = console.run_step("Write detections", write_detections_csv, [o.detections for o in outcomes],
                            out_dir / "detections.csv")
    _write_roles(outcomes, out_dir / "frames.csv")
    console.ok(f"Detections: {path}")
    return 0


def cmd_bench(args, console, config, out_dir):
    sequence = console.run_step("Generate sequence", generate_sequence, config.synth)
    bench = config.bench
    if args.parallel:
        bench = replace(bench, parallel=True)
    report = console.run_step("Benchmark", run_benchmark, config.pipeline, sequence, bench,
                              progress=console.progress)
    path = report.write_csv(out_dir / "bench.csv")
    console.print("")
    for line in report.format_lines():
        console.print(line)
    console.ok(f"Report: {path}")
    return 0


def cmd_sweep(args, console, config, out_dir):
    sequence = console.run_step("Generate sequence", generate_sequence, config.synth)
    result = console.run_step("Sweep key intervals", run_sweep, config.pipeline, sequence, config.bench,
                              progress=console.progress)
    for k in result.errors:
        console.print(f"  k={k:>3}  error {result.errors[k]:.6f}  FPS {result.fps.get(k, float('nan')):.2f}")
    if not result.fidelity:
        console.warn("Per-frame baseline produced no detections; F-mAP column left empty")
    error_path, fps_path = result.write_csv(out_dir)
    console.ok(f"Curves: {error_path}, {fps_path}")
    return 0


def cmd_synth(args, console, config, out_dir):
    sequence = console.run_step("Generate sequence", generate_sequence, config.synth)
    frames_dir = out_dir / "frames"
    manifest = console.run_step("Export pixmaps", export_sequence, sequence, frames_dir, console.progress)
    console.ok(f"{len(sequence)} frames in {frames_dir}, manifest {manifest}")
    return 0


def cmd_verify(args, console, config, out_dir):
    def checks():
        passed, failed = run_checks(console, seed=args.seed or 0)
        return StepResult(success=failed == 0, data={"passed": passed, "failed": failed})

    tally = console.run_step("Oracle checks", checks)
    return 0 if tally["failed"] == 0 else 1


COMMANDS = {
    "run": cmd_run,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "verify": cmd_verify,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with Console(args.command, out_dir) as console:
        console.print(f"\n  {BOLD}flowprop {__version__}{RESET}  {args.command}\n")
        console.print(f"Log: {console.log_file}")
        try:
            config = console.run_step("Load configuration", resolve_config, args)
            return COMMANDS[args.command](args, console, config, out_dir)
        except FlowpropError as e:
            console.fail(str(e))
            return 1
        except KeyboardInterrupt:
            console.print("\n\nInterrupted by user")
            return 130
        except Exception as e:
            console.fail(f"Unexpected error: {e}")
            console.print_traceback()
            return 1
        finally:
            console.print_summary()


if __name__ == "__main__":
    sys.exit(main())
