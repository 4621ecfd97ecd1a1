import io

import pytest

from flowprop.cli import main
from flowprop.console import Console
from flowprop.verify import check_aggregation, check_nms_and_map, check_sampler, check_warp_oracle, run_checks

SMALL_RUN = """\
[extractor]
input_size = 64, 64
level_dims = 32x32x4, 16x16x4, 8x8x4

[flow]
block_radius = 2
search_radius = 2
grid_stride = 2

[pipeline]
variant = fa+scale+ma
key_interval = 4

[synth]
frames = 8
objects = 1
object_size = 16, 16
velocity = 2, 0

[bench]
variants = ssd, fa
key_intervals = 4
repeats = 1
warmup = 0
"""


@pytest.fixture
def small_ini(write_config):
    return str(write_config(SMALL_RUN))


def test_synth_exports_frames(small_ini, tmp_path):
    assert main(["synth", "--config", small_ini, "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "frames").glob("frame_*.ppm"))) == 8
    assert (tmp_path / "frames" / "manifest.txt").exists()
    assert list((tmp_path / "logs").glob("synth_*.log"))


def test_run_is_deterministic(small_ini, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", small_ini, "--out", str(first)]) == 0
    assert main(["run", "--config", small_ini, "--out", str(second)]) == 0
    assert (first / "detections.csv").read_text() == (second / "detections.csv").read_text()
    roles = (first / "frames.csv").read_text().splitlines()
    assert roles[0] == "frame_index,role,detections"
    assert [line.split(",")[1] for line in roles[1:6]] == ["initial", "non-key", "non-key", "non-key", "key"]


def test_run_on_exported_frames_matches_generated(small_ini, tmp_path):
    assert main(["synth", "--config", small_ini, "--out", str(tmp_path / "synth")]) == 0
    assert main(["run", "--config", small_ini, "--out", str(tmp_path / "gen")]) == 0
    assert main(["run", "--config", small_ini, "--out", str(tmp_path / "disk"),
                 "--frames", str(tmp_path / "synth" / "frames")]) == 0
    assert (tmp_path / "gen" / "detections.csv").read_text() == (tmp_path / "disk" / "detections.csv").read_text()


def test_flags_override_the_file(small_ini, tmp_path, capsys):
    assert main(["run", "--config", small_ini, "--out", str(tmp_path), "--no-fa", "--key-interval", "2"]) == 0
    assert "8 extractions over 8 frames" in capsys.readouterr().out


def test_bad_config_exits_non_zero(write_config, tmp_path, capsys):
    path = write_config("[head]\nseed = 1\ncolour = red\n", name="bad.ini")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 1
    out = capsys.readouterr().out
    assert "line 3: unknown key 'colour'" in out
    assert "FAILED" in out


def test_invalid_key_interval_flag(small_ini, tmp_path):
    assert main(["run", "--config", small_ini, "--out", str(tmp_path), "--key-interval", "0"]) == 1


def test_missing_frames_directory(small_ini, tmp_path):
    assert main(["run", "--config", small_ini, "--out", str(tmp_path), "--frames", str(tmp_path / "none")]) == 1


@pytest.mark.slow
def test_bench_writes_report(small_ini, tmp_path):
    assert main(["bench", "--config", small_ini, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bench.csv").read_text().startswith("variant,key_interval")


def test_check_runner_reports_each_check():
    stream = io.StringIO()
    checks = [
        ("Warp equals all-pairs sum", lambda rng: check_warp_oracle(rng, 20)),
        ("Aggregation contracts", check_aggregation),
        ("NMS and mAP oracles", lambda rng: check_nms_and_map(rng, 20)),
        ("Training triplet sampler", lambda rng: check_sampler(rng, 5000)),
    ]
    passed, failed = run_checks(Console("verify", stream=stream), seed=3, checks=checks)
    assert (passed, failed) == (4, 0)
    assert stream.getvalue().count("✓") >= 5


def test_check_runner_counts_failures():
    stream = io.StringIO()
    passed, failed = run_checks(Console("verify", stream=stream), checks=[("Always fails", lambda rng: (False, "no"))])
    assert (passed, failed) == (0, 1)
    assert "✗ 1 check(s) failed" in stream.getvalue()
