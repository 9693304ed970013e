from __future__ import annotations

import numpy as np
import pytest
import yaml

from dronerace.config import default_config_path, load_config, parse_config
from dronerace.errors import ConfigError


def test_defaults_hold_the_reference_constants():
    cfg = load_config()
    d = cfg.drone
    assert (d.mass, d.gravity, d.arm_length, d.torque_constant) == (0.063, 9.81, 0.0624, 0.0024)
    assert (d.jxx, d.jyy, d.jzz) == (5.82857e-5, 7.16914e-5, 1e-4)
    p = cfg.potential
    assert (p.alpha, p.beta, p.gamma, p.delta1, p.delta2) == (1.0, 4.0, 5.0, -0.5, -1.0)
    assert (cfg.duration, cfg.control_cycle) == (20.0, 1e-3)
    assert (cfg.theta_rear, cfg.theta_front) == (0.0, 1.0)
    assert cfg.solver.horizon == 0.4
    r = cfg.race("D", "M")
    assert r.w_rear.input_weight == 20.0 and r.w_front.input_weight == 40.0
    np.testing.assert_allclose(cfg.path(1.0), [6 * np.sin(1), 3 * np.sin(2), 6 * np.sin(0.5)])
    assert cfg.overtaking_threshold == 0.9 and cfg.obstructing_threshold == 0.8


def test_shipped_file_parses_as_yaml():
    with open(default_config_path()) as fh:
        assert "drone" in yaml.safe_load(fh)


def test_partial_override_merges(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("race:\n  duration: 2.5\nsolver:\n  stages: 10\n")
    cfg = load_config(f)
    assert cfg.duration == 2.5 and cfg.solver.stages == 10
    assert cfg.solver.horizon == 0.4 and cfg.drone.mass == 0.063


@pytest.mark.parametrize("data", [
    {"drone": {"mas": 1.0}},
    {"unknown": 1},
    {"drone": {"mass": "heavy"}},
    {"race": {"theta_front": -1.0}},
    {"race": {"overtake_on": "time"}},
    {"solver": {"stages": 1}},
])
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_non_mapping_file_rejected(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(f)


def test_with_duration_updates_snapshot():
    cfg = load_config().with_duration(3.0)
    assert cfg.duration == 3.0 and cfg.raw["race"]["duration"] == 3.0
    assert load_config().raw["race"]["duration"] == 20.0
