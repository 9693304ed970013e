"""Run configuration: one YAML file holding every race constant.

The shipped ``paper.cfg`` is the default; a user file only needs the keys
it changes, everything else is filled in from the default.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .game_solver import SolverSettings
from .harness import RaceConfig
from .objectives import CostWeights, PotentialParams
from .paths import SinusoidPath
from .quadrotor import DroneParams


def default_config_path() -> Path:
    return Path(str(resources.files("dronerace") / "configs" / "paper.cfg"))


def _load_yaml(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {where + key!r}")
        # path components are free-form, replace them wholesale
        if isinstance(value, dict) and isinstance(base[key], dict) and key != "components":
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def _floats(section: dict, name: str) -> dict:
    try:
        return {k: (None if v is None else float(v)) for k, v in section.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: values must be numbers ({exc})") from exc


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration plus the raw mapping it came from."""

    raw: dict
    drone: DroneParams
    path: SinusoidPath
    w_rear: CostWeights
    w_front: CostWeights
    potential: PotentialParams
    opponent_speed: float
    duration: float
    control_cycle: float
    theta_rear: float
    theta_front: float
    overtake_on: str
    solver: SolverSettings
    window_start: float
    overtaking_threshold: float
    obstructing_threshold: float

    def race(self, front: str, rear: str) -> RaceConfig:
        return RaceConfig(front=front, rear=rear, theta_rear0=self.theta_rear,
                          theta_front0=self.theta_front, w_rear=self.w_rear,
                          w_front=self.w_front, potential=self.potential, drone=self.drone,
                          path=self.path, opponent_speed=self.opponent_speed,
                          duration=self.duration, control_cycle=self.control_cycle,
                          solver=self.solver, overtake_on=self.overtake_on)

    def with_duration(self, duration: float) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw["race"]["duration"] = duration
        return replace(self, raw=raw, duration=float(duration))


def parse_config(data: dict) -> RunConfig:
    """Validate a configuration mapping merged over the shipped defaults."""
    cfg = _merge(_load_yaml(default_config_path()), data)
    try:
        drone = DroneParams(**_floats(cfg["drone"], "drone"))
        path = SinusoidPath.from_config(cfg["path"])
        c = cfg["cost"]
        base = dict(position=tuple(map(float, c["position"])), rates=tuple(map(float, c["rates"])),
                    progress=float(c["progress"]))
        if len(base["position"]) != 3 or len(base["rates"]) != 3:
            raise ConfigError("cost.position and cost.rates need three entries")
        w_rear = CostWeights.for_drone(drone, float(c["input_weight"]["rear"]), **base)
        w_front = CostWeights.for_drone(drone, float(c["input_weight"]["front"]), **base)
        pot = PotentialParams(**_floats(cfg["potential"], "potential"))
        s = dict(cfg["solver"])
        solver = SolverSettings(
            horizon=float(s["horizon"]), stages=int(s["stages"]),
            zeta=None if s["zeta"] is None else float(s["zeta"]), fd_step=float(s["fd_step"]),
            krylov_dim=int(s["krylov_dim"]), restarts=int(s["restarts"]),
            krylov_tol=float(s["krylov_tol"]),
            newton_tol=float(s["newton_tol"]), newton_max_iter=int(s["newton_max_iter"]),
            init_fail_tol=float(s["init_fail_tol"]), preconditioner=bool(s["preconditioner"]),
            precond_columns=int(s["precond_columns"]),
            saddle_escapes=int(s["saddle_escapes"]))
        r = cfg["race"]
        cmp_ = _floats(cfg["comparison"], "comparison")
        run = RunConfig(cfg, drone, path, w_rear, w_front, pot, float(cfg["opponent_speed"]),
                        float(r["duration"]), float(r["control_cycle"]), float(r["theta_rear"]),
                        float(r["theta_front"]), str(r["overtake_on"]), solver,
                        cmp_["window_start"], cmp_["overtaking_threshold"],
                        cmp_["obstructing_threshold"])
        if solver.stages < 2 or solver.krylov_dim < 1 or solver.restarts < 0:
            raise ConfigError("solver: need stages >= 2, krylov_dim >= 1, restarts >= 0")
        run.race("D", "M")  # validates the race section
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return run


def load_config(path=None) -> RunConfig:
    """Read a configuration file; ``None`` loads the shipped default."""
    return parse_config({} if path is None else _load_yaml(path))
