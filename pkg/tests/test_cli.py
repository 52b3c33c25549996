import filecmp
import json

import pytest

from marskit import (
    ClockId,
    DeviceManifest,
    FrameRecord,
    ImuSample,
    Session,
    TimebasedInstant,
    read_session,
    read_synced,
    write_session,
)
from marskit.cli import run

FAST = ["--set", "duration_s=3", "--set", "seed=5"]


def _same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    names = cmp.common_files
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not (cmp.left_only or cmp.right_only or mismatch or errors) and all(
        _same_tree(a / d, b / d) for d in cmp.common_dirs
    )


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert run(["--quiet", "simulate", "--out", str(out), *FAST]) == 0
    return out


def test_simulate_then_validate(simulated, capsys):
    capsys.readouterr()
    assert run(["validate", str(simulated)]) == 0
    assert capsys.readouterr().out.strip() == "ok"
    assert (simulated / "groundtruth.json").is_file()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("# short run\nduration_s = 2\nframe_rate_hz = 15\nseed = 1\n")
    out = tmp_path / "o"
    assert run(["--quiet", "simulate", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
    doc = json.loads((out / "groundtruth.json").read_text())
    assert doc["seed"] == 9
    assert len(read_session(out).frames) == 30


def test_unknown_subcommand_is_usage_error(capsys):
    assert run(["frobnicate"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_required_flag_is_usage_error(capsys):
    assert run(["sync", "somewhere"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_bad_set_and_bad_config_value(tmp_path):
    assert run(["--quiet", "simulate", "--out", str(tmp_path / "x"), "--set", "duration_s"]) == 2
    assert run(["--quiet", "simulate", "--out", str(tmp_path / "x"), "--set", "duration_s=-4"]) == 2


def test_missing_directory_is_io_error(tmp_path, capsys):
    assert run(["validate", str(tmp_path / "nope")]) == 3
    assert "nope" in capsys.readouterr().err


def test_malformed_file_is_parse_error(simulated, capsys):
    path = simulated / "imu.csv"
    lines = path.read_text().splitlines()
    lines[3] = lines[3].replace(",", ";", 1)
    path.write_text("\n".join(lines) + "\n")
    assert run(["stats", str(simulated)]) == 3
    assert "imu.csv:4" in capsys.readouterr().err


def test_validate_reports_violations(simulated, capsys):
    path = simulated / "frames.csv"
    lines = path.read_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    path.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert run(["--format", "json", "validate", str(simulated)]) == 1
    doc = json.loads(capsys.readouterr().out)
    assert doc["valid"] is False
    assert {v["kind"] for v in doc["violations"]} == {"non-monotonic", "index-order"}


def test_stats_json_hist_and_plot(simulated, tmp_path, capsys):
    capsys.readouterr()
    hist = tmp_path / "h" / "hist.csv"
    figs = tmp_path / "figs"
    assert run(["stats", str(simulated), "--format", "json", "--hist", str(hist), "--plot", str(figs)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["streams"]["frames"]["stats"]["count"] == 89
    for name in ("frames", "imu"):
        text = (tmp_path / "h" / f"hist_{name}.csv").read_text()
        assert text.startswith("bin_start_ns,bin_end_ns,count\n")
        assert (figs / f"intervals_{name}.png").read_bytes()[:4] == b"\x89PNG"


def test_stats_on_two_timestamp_session(tmp_path, capsys):
    cam, imu = ClockId("monotonic"), ClockId("boottime")
    man = DeviceManifest("toy", "android", cam, cam)
    frames = [FrameRecord(i, TimebasedInstant(i * 33_000_000, cam), 0, 0) for i in range(2)]
    samples = [ImuSample(TimebasedInstant(i * 10_000_000, cam), (0, 0, 0), (0, 0, 9.81)) for i in range(2)]
    write_session(Session(man, frames, imu_combined=samples), tmp_path / "toy")
    capsys.readouterr()
    assert run(["--format", "json", "stats", str(tmp_path / "toy")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["streams"]["frames"]["stats"]["count"] == 1
    assert doc["streams"]["imu"]["stats"]["count"] == 1


def test_text_stats(simulated, capsys):
    capsys.readouterr()
    assert run(["stats", str(simulated)]) == 0
    out = capsys.readouterr().out
    assert "frames: n=90" in out and "imu: n=300" in out


def test_simulate_sync_export_pipeline(simulated, tmp_path):
    synced_dir, slam = tmp_path / "synced", tmp_path / "slam"
    assert run(["--quiet", "sync", str(simulated), "--target-clock", "boottime", "--out", str(synced_dir)]) == 0
    synced = read_synced(synced_dir)
    assert synced.clocks() == {ClockId("boottime")}
    assert run(["--quiet", "export", str(synced_dir), "--out", str(slam)]) == 0
    for rel in ("imu0/data.csv", "cam0/data.csv", "cam0/sensor.yaml", "imu0/sensor.yaml"):
        assert (slam / rel).is_file()
    rows = (slam / "cam0" / "data.csv").read_text().splitlines()
    assert len(rows) == 1 + len(synced.frames)
    # exporting the raw session syncs on the way
    assert run(["--quiet", "export", str(simulated), "--out", str(tmp_path / "slam2"), "--target-clock", "boottime"]) == 0
    assert _same_tree(slam, tmp_path / "slam2")


def test_sync_to_wrong_clock_fails(simulated, tmp_path, capsys):
    assert run(["--quiet", "sync", str(simulated), "--target-clock", "monotonic", "--out", str(tmp_path / "s")]) == 1
    assert "monotonic" in capsys.readouterr().err
    assert not (tmp_path / "s").exists()


def test_identical_invocations_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run(["--quiet", "--seed", "11", "simulate", "--out", str(tmp_path / name), "--set", "duration_s=2"]) == 0
    assert _same_tree(tmp_path / "a", tmp_path / "b")


def test_global_flags_after_subcommand(simulated, capsys):
    capsys.readouterr()
    assert run(["stats", str(simulated), "--quiet", "--format", "json"]) == 0
    captured = capsys.readouterr()
    json.loads(captured.out)
    assert captured.err == ""
