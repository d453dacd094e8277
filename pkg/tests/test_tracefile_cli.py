import json

import numpy as np
import pytest

from adptrack.cli import main, run_scenarios, summarize_trace
from adptrack.config import parse_config, serialize_config
from adptrack.engine import TRACE_ARRAYS, run_episode
from adptrack.tracefile import read_trace, sidecar_path, trace_columns, write_trace
from adptrack.presets import nominal_scenario, synthetic_pi_scenario


def _short(mode="OTA2", steps=40):
    return nominal_scenario(mode, duration=steps * 0.001).replace(name=f"short_{mode.lower()}")


@pytest.fixture(scope="module")
def short_trace():
    return run_episode("OTA2", _short())


# -- trace files --------------------------------------------------------------------

def test_columns_for_wing_layout():
    cols = trace_columns(5, 1, 3)
    assert cols[:7] == ["t", "x1", "x2", "x3", "x4", "x5", "u"]
    assert len(cols) == 1 + 5 + 1 + 1 + 1 + 4 + 3 + 5 + 10 + 21
    assert cols[-1] == "optimizer_kernel_6_6" and "tracker_kernel_1_4" in cols


def test_zero_length_trace_is_header_only(tmp_path, short_trace):
    path = tmp_path / "empty.csv"
    write_trace(short_trace.truncated(0), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("t,x1")
    assert len(read_trace(path)) == 0


def test_one_step_trace_has_two_lines(tmp_path, short_trace):
    path = tmp_path / "one.csv"
    write_trace(short_trace.truncated(1), path)
    assert len(path.read_text().splitlines()) == 2


def test_round_trip_is_bit_exact(tmp_path, short_trace):
    path = tmp_path / "trace.csv"
    write_trace(short_trace, path, {"note": "x"})
    back = read_trace(path)
    for name in TRACE_ARRAYS:
        assert np.array_equal(np.asarray(getattr(back, name)).reshape(len(back), -1),
                              np.asarray(getattr(short_trace, name)).reshape(len(back), -1)), name
    assert back.metadata["note"] == "x"
    assert back.metadata["config_hash"] == short_trace.metadata["config_hash"]


def test_policy_iteration_rounds_in_sidecar(tmp_path):
    tr = run_episode("PI_BASELINE", synthetic_pi_scenario(rounds=2))
    path = tmp_path / "pi.csv"
    write_trace(tr, path)
    meta = json.loads(sidecar_path(path).read_text())
    assert len(meta["policy_iteration_rounds"]) == 2
    np.testing.assert_allclose(meta["policy_iteration_rounds"][1]["evaluated_gain"],
                               tr.rounds[0].improved_gain)


# -- batch runs ---------------------------------------------------------------------

def test_empty_config_list(tmp_path):
    report = run_scenarios([], 1, tmp_path)
    assert report == {"status": "ok", "scenarios": [], "comparison": {"naci": {}, "avg_sq_error": {}}}


def test_identical_configs_give_identical_files(tmp_path):
    cfg = _short("OTA1")
    report = run_scenarios([cfg, cfg], 2, tmp_path)
    a, b = (s["trace"] for s in report["scenarios"])
    assert a != b
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_report_matches_recomputation(tmp_path):
    cfgs = [_short("STA1"), _short("OTA2")]
    report = run_scenarios(cfgs, 1, tmp_path)
    assert report["status"] == "ok"
    for cfg, entry in zip(cfgs, report["scenarios"]):
        trace = run_episode(cfg.mode, cfg)
        fresh = summarize_trace(trace, {**trace.metadata, "config": json.loads(json.dumps(
            __import__("adptrack.config", fromlist=["config_to_dict"]).config_to_dict(cfg)))})
        assert entry["avg_sq_error"] == fresh["avg_sq_error"]
        assert entry["naci"] == fresh["naci"]
        assert entry["final_gains"] == fresh["final_gains"]
        assert report["comparison"]["naci"][cfg.name] == entry["naci"]


def test_divergent_scenario_marks_report_failed(tmp_path):
    bad = parse_config({
        "name": "unstable", "mode": "OTA1", "duration": 2000.0,
        "plant": {"A": [[3.0]], "B": [[1.0]], "Ts": 1.0}, "initial_state": [1.0],
        "trajectory": {"kind": "constant", "level": 0.0}, "weights": {"Q": [1.0], "R": [1.0]},
        "rates": {"critic": 0.0, "actor": 0.0}, "tracker": {"enabled": False}})
    report = run_scenarios([bad, _short("STA2")], 1, tmp_path)
    assert report["status"] == "failed"
    first, second = report["scenarios"]
    assert first["status"] == "diverged" and first["step"] > 0
    assert second["status"] == "ok"
    assert list(report["comparison"]["naci"]) == [second["name"]]


# -- command line -------------------------------------------------------------------

def test_cli_run_and_report(tmp_path, capsys):
    cfg_path = tmp_path / "s.yaml"
    cfg_path.write_text(serialize_config(_short("OTA2")))
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok" and len(report["scenarios"]) == 1
    capsys.readouterr()
    trace_file = report["scenarios"][0]["trace"]
    assert main(["report", trace_file]) == 0
    again = json.loads(capsys.readouterr().out)
    assert again["scenarios"][0]["avg_sq_error"] == report["scenarios"][0]["avg_sq_error"]


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("mode: OTA1\nrates:\n  critic: 1.5\n")
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 2
    assert "rates.critic" in capsys.readouterr().err
    assert not (tmp_path / "report.json").exists()


def test_cli_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2


def test_cli_poles(tmp_path, capsys):
    cfg_path = tmp_path / "s.yaml"
    cfg_path.write_text("mode: OTA2\n")
    assert main(["poles", str(cfg_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    reals = sorted(p[0] for p in out["open_loop"])
    assert reals[0] == pytest.approx(-22.59, abs=0.05) and reals[-1] == pytest.approx(0, abs=1e-6)


def test_cli_rejects_bad_parallelism(capsys):
    assert main(["run", "--parallel", "0"]) == 2
