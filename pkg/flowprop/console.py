"""
Console output for the flowprop commands: step banners, spinner, log file
and the end-of-command summary table.
"""

import re
import sys
import time
import traceback
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from flowprop.timing import format_duration

# Try to import yaspin, fall back to simple output if not available
try:
    from yaspin import yaspin
    HAS_YASPIN = True
except ImportError:
    HAS_YASPIN = False

BOLD = '\033[1m'
GRAY = '\033[90m'
RED = '\033[0;31m'
GREEN = '\033[0;32m'
RESET = '\033[0m'


def strip_ansi(text):
    """Strip ANSI escape codes from text"""
    return re.sub(r'\x1b\[[0-9;]*m', '', text)


@dataclass
class StepResult:
    """Result from a command step, optionally containing metadata."""
    success: bool
    data: dict = field(default_factory=dict)


@dataclass
class StepRecord:
    name: str
    success: bool
    elapsed: float


class Console:
    """Prints to the terminal and mirrors every line, timestamped, into a log file."""

    def __init__(self, command, out_dir=None, stream=None):
        self.command = command
        self.stream = stream or sys.stdout
        self.results = []
        self.log_file = None
        self._log = None
        if out_dir is not None:
            log_dir = Path(out_dir) / "logs"
            log_dir.mkdir(parents=True, exist_ok=True)
            timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
            self.log_file = log_dir / f"{command}_{timestamp}.log"
            self._log = open(self.log_file, 'w')
            self._log.write(f"flowprop {command} log\n")
            self._log.write(f"Started at {datetime.now()}\n")
            self._log.write(f"{'=' * 80}\n\n")

    def close(self):
        if self._log:
            self._log.close()
            self._log = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def log_line(self, line):
        """Write a line to the log file with a timestamp prefix."""
        if self._log:
            ts = datetime.now().strftime('%H:%M:%S')
            self._log.write(f"[{ts}] {strip_ansi(line)}\n")
            self._log.flush()

    def print(self, line=""):
        print(line, file=self.stream, flush=True)
        self.log_line(line)

    def ok(self, message):
        self.print(f"✓ {message}")

    def fail(self, message):
        self.print(f"✗ {message}")

    def warn(self, message):
        self.print(f"⚠ {message}")

    def progress(self, message):
        """Progress callback for long library calls."""
        self.print(f"{GRAY}  {message}{RESET}")

    def run_step(self, name, func, *args, **kwargs):
        """Run a step with timing; returns its data and records the outcome. Errors propagate."""
        self.print(f"\n{'=' * 60}")
        self.print(f"STEP: {name}")
        self.print(f"{'=' * 60}")

        start_time = time.time()
        try:
            if HAS_YASPIN and self.stream.isatty():
                with yaspin(text=f"{BOLD}{name}{RESET}", color="cyan") as sp:
                    result = func(*args, **kwargs)
                    sp.ok(f"{BOLD}✓{RESET}")
            else:
                result = func(*args, **kwargs)
        except BaseException:
            elapsed = time.time() - start_time
            self.results.append(StepRecord(name, False, elapsed))
            self.fail(f"{name} failed after {elapsed:.1f}s")
            raise

        elapsed = time.time() - start_time
        if isinstance(result, StepResult):
            success, data = result.success, result.data
        else:
            success, data = True, result
        self.results.append(StepRecord(name, success, elapsed))
        if success:
            self.ok(f"{name} completed successfully (took {format_duration(elapsed)})")
        else:
            self.fail(f"{name} failed (took {format_duration(elapsed)})")
        return data

    def print_summary(self):
        """Print a summary of all steps"""
        if not self.results:
            return

        self.print(f"\n{'=' * 60}")
        self.print(f"{self.command.upper()} SUMMARY")
        self.print(f"{'=' * 60}")

        col_width = max(max(len(r.name) for r in self.results), 20)
        self.print(f"\n{'Step':<{col_width}}  {'Status':<10}  {'Time'}")
        self.print(f"{'-' * col_width}  {'-' * 10}  {'-' * 15}")

        total_time = 0
        for r in self.results:
            status = "✓ SUCCESS" if r.success else "✗ FAILED"
            total_time += r.elapsed
            self.print(f"{r.name:<{col_width}}  {status:<10}  {format_duration(r.elapsed)}")

        self.print(f"{'-' * col_width}  {'-' * 10}  {'-' * 15}")
        self.print(f"{'Total':<{col_width}}             {format_duration(total_time)}")
        self.print(f"{'=' * 60}")
        self.print(f"Finished: {datetime.now().astimezone().strftime('%Y-%m-%d %H:%M:%S %Z')}\n")

    def print_traceback(self):
        text = traceback.format_exc()
        print(text, file=sys.stderr, flush=True)
        for line in text.rstrip().splitlines():
            self.log_line(line)
