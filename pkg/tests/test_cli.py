import json

import pytest

from uvrpipe.cli import main
from uvrpipe.report import load_report, strip_meta


def _run_args(tmp_path, name, extra=()):
    out = tmp_path / f"{name}.json"
    argv = [
        "sim", "run", "--preset", "openuvr", "--seed", "42",
        "--set", "duration_s=1",
        "--out", str(out),
        *extra,
    ]
    assert main(argv) == 0
    return out


def test_sim_run_writes_report(tmp_path, capsys):
    out = _run_args(tmp_path, "r")
    data = load_report(out)
    assert data["schema_version"] == 1
    assert data["report"]["seed"] == 42
    assert data["report"]["end_to_end"]["mean_ms"] == pytest.approx(14.32, abs=0.08)
    shares = sum(row["share_pct"] for row in data["breakdown"])
    assert shares == pytest.approx(100.0, abs=0.1)
    shown = capsys.readouterr().out
    assert "end-to-end latency" in shown


def test_report_show(tmp_path, capsys):
    out = _run_args(tmp_path, "r2")
    capsys.readouterr()
    assert main(["report", "show", str(out)]) == 0
    text = capsys.readouterr().out
    assert "stage" in text and "share" in text


def test_trace_export(tmp_path):
    trace = tmp_path / "t.csv"
    argv = [
        "sim", "run", "--preset", "baseline", "--seed", "1",
        "--set", "duration_s=0.5", "--trace", str(trace),
    ]
    assert main(argv) == 0
    lines = trace.read_text().splitlines()
    assert lines[0].startswith("frame_id,type,forced,gen_us,encoded_us")
    assert len(lines) == 1 + 30  # header + 0.5 s at 60 FPS


def test_trace_enabled_key_writes_beside_report(tmp_path):
    out = tmp_path / "r3.json"
    argv = [
        "sim", "run", "--preset", "baseline", "--seed", "1",
        "--set", "duration_s=0.5", "--set", "trace.enabled=true",
        "--out", str(out),
    ]
    assert main(argv) == 0
    assert (tmp_path / "r3.json.trace.csv").exists()


def test_validation_error_exit_code(tmp_path, capsys):
    assert main(["sim", "run", "--set", "codec.gop_size=0", "--set", "duration_s=1"]) == 1
    err = capsys.readouterr().err
    assert "codec.gop_size" in err
    assert main(["sim", "run", "--set", "no.such.key=1"]) == 1


def test_seed_precedence(tmp_path, monkeypatch):
    out = tmp_path / "env.json"
    monkeypatch.setenv("UVRPIPE_SEED", "7")
    assert main(["sim", "run", "--set", "duration_s=0.5", "--out", str(out)]) == 0
    assert load_report(out)["report"]["seed"] == 7
    out2 = tmp_path / "flag.json"
    assert main(
        ["sim", "run", "--set", "duration_s=0.5", "--seed", "9", "--out", str(out2)]
    ) == 0
    assert load_report(out2)["report"]["seed"] == 9


def test_ab_single_toggle(tmp_path, capsys):
    out = tmp_path / "ab.json"
    argv = [
        "sim", "ab", "--toggle", "transcode_avoidance", "--preset", "baseline",
        "--seed", "42", "--set", "duration_s=2", "--out", str(out),
    ]
    assert main(argv) == 0
    data = load_report(out)
    assert data["ab_compare"]["toggle"] == "transcode_avoidance"
    assert data["ab_compare"]["delta_ms"] == pytest.approx(5.51, abs=0.1)


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sweep.json"
    argv = [
        "sim", "sweep", "--key", "codec.gop_size", "--values", "20,480",
        "--preset", "baseline", "--seed", "42", "--set", "duration_s=1",
        "--out", str(out),
    ]
    assert main(argv) == 0
    data = load_report(out)
    assert [r["value"] for r in data["results"]] == ["20", "480"]
    table = capsys.readouterr().out
    assert "codec.gop_size" in table


def test_scenario_file_round_trip(tmp_path):
    from uvrpipe.scenario import emit_scenario, preset_config

    scenario = tmp_path / "openuvr.cfg"
    scenario.write_text(emit_scenario(preset_config("openuvr")))
    out = tmp_path / "file.json"
    argv = [
        "sim", "run", "--scenario", str(scenario),
        "--set", "duration_s=0.5", "--out", str(out),
    ]
    assert main(argv) == 0
    cfg_echo = load_report(out)["report"]["config"]
    assert cfg_echo["codec.gop_size"] == "480"
    assert cfg_echo["toggles.p2p_topology"] == "true"


def test_identical_runs_identical_reports(tmp_path):
    a = _run_args(tmp_path, "a")
    b = _run_args(tmp_path, "b")
    assert strip_meta(load_report(a)) == strip_meta(load_report(b))
