from __future__ import annotations

import json

import numpy as np
import pytest

from dronerace.cli import main
from dronerace.io import read_race_csv


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_pair_is_usage_error(tmp_path):
    assert main(["race", "--pair", "D,X", "--out", str(tmp_path)]) == 2


def test_missing_config_reports_json(tmp_path, capsys):
    code = main(["race", "--pair", "D,M", "--config", str(tmp_path / "none.cfg"),
                 "--out", str(tmp_path)])
    assert code == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["exit_status"] == 2 and rec["error"] == "FileNotFoundError"


def test_runtime_failure_exits_one(tmp_path, capsys):
    cfg = tmp_path / "fail.cfg"
    cfg.write_text("solver:\n  newton_max_iter: 0\n  init_fail_tol: 1.0e-300\n"
                   "  saddle_escapes: 0\n")
    code = main(["race", "--pair", "D,M", "--config", str(cfg), "--duration", "0.01",
                 "--out", str(tmp_path / "run")])
    assert code == 1
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "InitializationFailed"


def test_race_writes_log_and_manifest(tmp_path):
    out = tmp_path / "dm"
    assert main(["race", "--pair", "D,M", "--duration", "0.05", "--out", str(out)]) == 0
    log = read_race_csv(out / "race_D-M.csv", "D", "M")
    assert len(log) == 51
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "race" and man["seedless"] is False
    assert man["config"]["race"]["duration"] == 0.05
    assert "race_D-M.csv" in man["artifacts"]
    t = man["timing"]["D,M"]
    # statistics recomputed from the logged samples agree with the manifest
    assert t["front"]["mean_ms"] == pytest.approx(float(np.mean(log.front_solve_ms)), rel=1e-12)
    assert t["rear"]["max_ms"] == pytest.approx(float(np.max(log.rear_solve_ms)), rel=1e-12)
    assert t["front"]["controller"] == "D" and t["rear"]["controller"] == "M"


def test_seedless_zeroes_logged_solve_times(tmp_path):
    out = tmp_path / "mm"
    assert main(["race", "--pair", "M,M", "--duration", "0.02", "--out", str(out),
                 "--seedless"]) == 0
    log = read_race_csv(out / "race_M-M.csv")
    assert np.all(log.rear_solve_ms == 0)
    man = json.loads((out / "manifest.json").read_text())
    assert man["timing"]["M,M"]["rear"]["mean_ms"] > 0


def test_plot_renders_svgs(tmp_path):
    out = tmp_path / "dd"
    assert main(["race", "--pair", "D,D", "--duration", "0.05", "--out", str(out)]) == 0
    assert main(["plot", str(out / "race_D-D.csv"), "--out", str(tmp_path / "fig")]) == 0
    for name in ("race_D-D_history.svg", "race_D-D_3d.svg"):
        text = (tmp_path / "fig" / name).read_text()
        assert text.lstrip().startswith("<?xml") and "<svg" in text


def test_plot_missing_input(tmp_path):
    assert main(["plot", str(tmp_path / "nothing")]) == 2


def test_project_demo(tmp_path):
    out = tmp_path / "pd"
    assert main(["project-demo", "--duration", "0.5", "--out", str(out)]) == 0
    s = json.loads((out / "project_demo.json").read_text())
    assert s["max_abs_stationarity"] < 1e-6
    assert s["min_singularity_margin"] > 0
    assert s["max_grid_theta_error"] < 1e-3
    assert s["manifest"] == "manifest.json"
