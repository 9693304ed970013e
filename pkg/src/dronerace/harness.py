"""Closed-loop two-drone races, progress extraction and the four-race comparison.

A race Race(B, A) puts controller B in front (starting at r(theta_front0))
and controller A behind it (starting at r(theta_rear0)). Controllers are
``M`` (NMPC), ``D`` (NRHDG) or ``H`` (hover inputs, no solver). Every
control cycle both controllers read the measured combined state, their
inputs are held over the cycle and the plant advances by one RK4 step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernels
from .errors import (IncompleteRaces, NonFiniteResidual, RaceAborted,
                     SingularProjection)
from .game_solver import (ControllerOutput, SolverSettings, continuation_update,
                          initialize_solver)
from .objectives import (CostWeights, NMPCProblem, NRHDGProblem, PathFollowingProblem,
                         PotentialParams)
from .paths import (AUG_DIM, SinusoidPath, race_path, signed_arc_length,
                    singularity_margin, solve_initial_projection, stationarity_residual)
from .quadrotor import DroneParams, DroneState

log = logging.getLogger(__name__)

CONTROLLERS = ("M", "D", "H")
PAIRINGS = (("D", "M"), ("M", "D"), ("D", "D"), ("M", "M"))


@dataclass(frozen=True)
class RaceConfig:
    """Everything needed to run Race(front, rear)."""

    front: str = "D"
    rear: str = "M"
    theta_rear0: float = 0.0
    theta_front0: float = 1.0
    w_rear: CostWeights = CostWeights(input_weight=20.0)
    w_front: CostWeights = CostWeights(input_weight=40.0)
    potential: PotentialParams = PotentialParams()
    drone: DroneParams = DroneParams()
    path: SinusoidPath = field(default_factory=race_path)
    opponent_speed: float = 1.0
    duration: float = 20.0
    control_cycle: float = 1e-3
    solver: SolverSettings = SolverSettings()
    overtake_on: str = "theta"

    def __post_init__(self):
        for who in (self.front, self.rear):
            if who not in CONTROLLERS:
                raise ValueError(f"unknown controller {who!r}; expected one of {CONTROLLERS}")
        if not self.theta_front0 > self.theta_rear0:
            raise ValueError("the front drone must start ahead of the rear drone")
        if not self.duration > 0 or not self.control_cycle > 0:
            raise ValueError("duration and control cycle must be positive")
        if self.overtake_on not in ("theta", "sigma"):
            raise ValueError("overtake_on must be 'theta' or 'sigma'")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.control_cycle))

    @property
    def label(self) -> str:
        return f"{self.front},{self.rear}"


@dataclass
class RaceLog:
    """Per-cycle record of a race, one row per control cycle.

    States are 15-dimensional augmented states. ``solve_ms`` holds the
    wall-clock time of each controller update in milliseconds.
    """

    t: np.ndarray
    rear_state: np.ndarray
    front_state: np.ndarray
    rear_input: np.ndarray
    front_input: np.ndarray
    rear_residual: np.ndarray
    front_residual: np.ndarray
    rear_solve_ms: np.ndarray
    front_solve_ms: np.ndarray
    potential_ego: np.ndarray
    potential_opp: np.ndarray
    min_distance: np.ndarray
    front: str = ""
    rear: str = ""

    @classmethod
    def empty(cls, n: int = 0, front: str = "", rear: str = "") -> "RaceLog":
        return cls(np.zeros(n), np.zeros((n, AUG_DIM)), np.zeros((n, AUG_DIM)),
                   np.zeros((n, 4)), np.zeros((n, 4)), np.zeros(n), np.zeros(n),
                   np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n),
                   front, rear)

    def __len__(self) -> int:
        return self.t.size

    def truncated(self, n: int) -> "RaceLog":
        return RaceLog(*(getattr(self, f)[:n] for f in _ARRAY_FIELDS), self.front, self.rear)

    def timing_stats(self) -> dict:
        """Mean and max solve time per update in ms, per position."""
        out = {}
        for pos, who in (("rear", self.rear), ("front", self.front)):
            ms = getattr(self, f"{pos}_solve_ms")
            out[pos] = {"controller": who,
                        "mean_ms": float(ms.mean()) if ms.size else float("nan"),
                        "max_ms": float(ms.max()) if ms.size else float("nan"),
                        "updates": int(ms.size)}
        return out


_ARRAY_FIELDS = ("t", "rear_state", "front_state", "rear_input", "front_input",
                 "rear_residual", "front_residual", "rear_solve_ms", "front_solve_ms",
                 "potential_ego", "potential_opp", "min_distance")


@dataclass
class ProgressSeries:
    """Progress of the rear-starting drone in one race.

    ``theta`` is Prog_rear; ``t_ov`` the first sample time at which the
    rear drone's progress reaches the front drone's, or None.
    """

    t: np.ndarray
    theta: np.ndarray
    front_theta: np.ndarray
    t_ov: float | None
    index_ov: int | None
    monotonicity_violations: int = 0


# --------------------------------------------------------------------------
# Plant


class Plant:
    """Both drones' augmented dynamics, integrated with RK4 at a fixed step."""

    def __init__(self, path: SinusoidPath, drone: DroneParams = DroneParams(),
                 pp: PotentialParams = PotentialParams()):
        self.path = path
        self.drone = drone
        terms, lin = path.kernel_args
        w = CostWeights().as_array()
        self._params = _kernels.pack_race_params(drone.as_array(), w, w, pp.as_array(), 0.0,
                                                 terms, lin)
        self._pb = np.zeros((8, 3))

    def potential(self, x_e, x_o) -> float:
        """Potential seen by the drone in state x_e because of the one in x_o."""
        return float(_kernels.potential_value(self._params, x_e, x_o[0:3], x_o[13], self._pb))

    def step(self, x, u_rear, u_front, dt: float) -> np.ndarray:
        out = np.empty(2 * AUG_DIM)
        st = _kernels.rk4_pair(np.asarray(x, dtype=float), np.asarray(u_rear, dtype=float),
                               np.asarray(u_front, dtype=float), self._params, dt, out,
                               self._pb)
        if st != _kernels.OK:
            raise SingularProjection("singular projection while stepping the plant")
        return out


def step_plant(x_D, u_rear, u_front, dt: float, path: SinusoidPath,
               drone: DroneParams = DroneParams()) -> np.ndarray:
    """One RK4 step of the 30-dimensional (rear, front) state.

    Quaternions are renormalized after the step.

    Raises:
        SingularProjection: a stage of the step hit the projection singularity.
    """
    return Plant(path, drone).step(x_D, u_rear, u_front, dt)


# --------------------------------------------------------------------------
# Controllers


class HoverController:
    """Holds every rotor at the hover thrust."""

    label = "H"

    def __init__(self, drone: DroneParams):
        self.u = np.full(4, drone.hover_thrust)

    def initialize(self, x_self, x_opp, t):
        pass

    def update(self, x_self, x_opp, t, dt) -> ControllerOutput:
        return ControllerOutput(self.u.copy(), self.u[None, :].copy(), 0.0, 0.0)


class NMPCController:
    """NMPC against an opponent predicted to move parallel to the path.

    The prediction is re-anchored every cycle at the opponent's measured
    position and its projection onto the path.
    """

    label = "M"

    def __init__(self, cfg: RaceConfig, weights: CostWeights):
        self.cfg = cfg
        self.problem = NMPCProblem(cfg.path, cfg.drone, weights, cfg.potential,
                                   cfg.opponent_speed)
        self.solver = None
        self._pb = np.zeros((8, 3))

    def _state(self, x_self, x_opp):
        path = self.cfg.path
        theta_op = _kernels.project(self.problem.params, x_opp[0:3], x_opp[13], path.theta_min,
                                    path.theta_max, 1e-10, 100, self._pb)
        if not np.isfinite(theta_op):
            theta_op = solve_initial_projection(path, x_opp[0:3], hint=x_opp[13])
        return np.concatenate([x_self, x_opp[0:3], [theta_op]])

    def initialize(self, x_self, x_opp, t):
        self.solver = initialize_solver(self._state(x_self, x_opp), t, self.problem,
                                        settings=self.cfg.solver,
                                        control_cycle=self.cfg.control_cycle)

    def update(self, x_self, x_opp, t, dt) -> ControllerOutput:
        return continuation_update(self.solver, self._state(x_self, x_opp), t, dt)


class NRHDGController:
    """Zero-sum game controller; the opponent is the maximizing player."""

    label = "D"

    def __init__(self, cfg: RaceConfig, w_self: CostWeights, w_opp: CostWeights):
        self.cfg = cfg
        self.problem = NRHDGProblem(cfg.path, cfg.drone, w_self, w_opp, cfg.potential)
        self.solver = None

    def initialize(self, x_self, x_opp, t):
        self.solver = initialize_solver(np.concatenate([x_self, x_opp]), t, self.problem,
                                        settings=self.cfg.solver,
                                        control_cycle=self.cfg.control_cycle)

    def update(self, x_self, x_opp, t, dt) -> ControllerOutput:
        return continuation_update(self.solver, np.concatenate([x_self, x_opp]), t, dt)


def make_controller(kind: str, cfg: RaceConfig, w_self: CostWeights, w_opp: CostWeights):
    if kind == "M":
        return NMPCController(cfg, w_self)
    if kind == "D":
        return NRHDGController(cfg, w_self, w_opp)
    if kind == "H":
        return HoverController(cfg.drone)
    raise ValueError(f"unknown controller {kind!r}")


# --------------------------------------------------------------------------
# Race


def initial_state(cfg: RaceConfig) -> np.ndarray:
    """Both drones at rest in hover attitude on the path, (rear, front)."""
    xs = []
    for theta0 in (cfg.theta_rear0, cfg.theta_front0):
        p0 = cfg.path(theta0)
        theta = solve_initial_projection(cfg.path, p0, hint=theta0)
        xs.append(np.concatenate([np.asarray(DroneState.hover_at(p0)), [theta, 0.0]]))
    return np.concatenate(xs)


def run_race(cfg: RaceConfig) -> RaceLog:
    """Simulate Race(cfg.front, cfg.rear) for cfg.duration seconds.

    Raises:
        RaceAborted: a projection singularity or a non-finite residual;
            carries the failure time and the log up to that point.
    """
    dt = cfg.control_cycle
    n = cfg.steps + 1
    rec = RaceLog.empty(n, cfg.front, cfg.rear)
    plant = Plant(cfg.path, cfg.drone, cfg.potential)
    rear = make_controller(cfg.rear, cfg, cfg.w_rear, cfg.w_front)
    front = make_controller(cfg.front, cfg, cfg.w_front, cfg.w_rear)
    x = initial_state(cfg)
    rear.initialize(x[:AUG_DIM], x[AUG_DIM:], 0.0)
    front.initialize(x[AUG_DIM:], x[:AUG_DIM], 0.0)
    dmin = np.inf
    for k in range(n):
        t = k * dt
        xr, xf = x[:AUG_DIM], x[AUG_DIM:]
        try:
            out_r = rear.update(xr, xf, t, dt)
            out_f = front.update(xf, xr, t, dt)
        except (SingularProjection, NonFiniteResidual) as exc:
            raise RaceAborted(f"controller failure in Race({cfg.label}): {exc}", t,
                              rec.truncated(k), exc) from exc
        dmin = min(dmin, float(np.linalg.norm(xr[0:3] - xf[0:3])))
        rec.t[k] = t
        rec.rear_state[k] = xr
        rec.front_state[k] = xf
        rec.rear_input[k] = out_r.u
        rec.front_input[k] = out_f.u
        rec.rear_residual[k] = out_r.residual_norm
        rec.front_residual[k] = out_f.residual_norm
        rec.rear_solve_ms[k] = 1e3 * out_r.solve_time
        rec.front_solve_ms[k] = 1e3 * out_f.solve_time
        rec.potential_ego[k] = plant.potential(xr, xf)
        rec.potential_opp[k] = plant.potential(xf, xr)
        rec.min_distance[k] = dmin
        if k + 1 < n:
            try:
                x = plant.step(x, out_r.u, out_f.u, dt)
            except SingularProjection as exc:
                raise RaceAborted(f"plant failure in Race({cfg.label}): {exc}", t,
                                  rec.truncated(k + 1), exc) from exc
    return rec


@dataclass
class PathFollowingLog:
    """Single-drone run: states, inputs and projection diagnostics per cycle."""

    t: np.ndarray
    state: np.ndarray
    input: np.ndarray
    residual: np.ndarray
    solve_ms: np.ndarray
    stationarity: np.ndarray
    margin: np.ndarray


def run_path_following(cfg: RaceConfig, duration: float | None = None,
                       weights: CostWeights | None = None) -> PathFollowingLog:
    """Fly one NMPC drone along the path with no opponent, from hover at r(theta_rear0).

    The projection parameter is integrated as a state; the log records the
    stationarity residual (r(theta) - p) . r'(theta) and the singularity
    margin at every cycle so the projection tracking can be inspected.

    Raises:
        RaceAborted: a projection singularity or a non-finite residual.
    """
    duration = cfg.duration if duration is None else float(duration)
    dt = cfg.control_cycle
    n = int(round(duration / dt)) + 1
    w = cfg.w_rear if weights is None else weights
    problem = PathFollowingProblem(cfg.path, cfg.drone, w)
    plant = Plant(cfg.path, cfg.drone, cfg.potential)
    x = initial_state(cfg)[:AUG_DIM]
    solver = initialize_solver(x, 0.0, problem, settings=cfg.solver, control_cycle=dt)
    out = PathFollowingLog(np.zeros(n), np.zeros((n, AUG_DIM)), np.zeros((n, 4)), np.zeros(n),
                           np.zeros(n), np.zeros(n), np.zeros(n))
    for k in range(n):
        t = k * dt
        try:
            o = continuation_update(solver, x, t, dt)
        except (SingularProjection, NonFiniteResidual) as exc:
            raise RaceAborted(f"controller failure in path following: {exc}", t, None, exc) from exc
        out.t[k] = t
        out.state[k] = x
        out.input[k] = o.u
        out.residual[k] = o.residual_norm
        out.solve_ms[k] = 1e3 * o.solve_time
        out.stationarity[k] = stationarity_residual(cfg.path, x[13], x[0:3])
        out.margin[k] = singularity_margin(cfg.path, x[13], x[0:3])
        if k + 1 < n:
            # the plant integrates drone pairs; fly an identical copy alongside
            try:
                x = plant.step(np.concatenate([x, x]), o.u, o.u, dt)[:AUG_DIM]
            except SingularProjection as exc:
                raise RaceAborted(f"plant failure in path following: {exc}", t, None,
                                  exc) from exc
    return out


# --------------------------------------------------------------------------
# Progress and comparison


def extract_progress(log_: RaceLog, overtake_on: str = "theta", path: SinusoidPath | None = None,
                     theta0: tuple[float, float] | None = None) -> ProgressSeries:
    """Rear-drone progress and the first sample where it catches the front drone.

    With ``overtake_on="sigma"`` the crossing compares arc length travelled
    from the common origin; ``path`` and the initial parameters
    ``theta0 = (rear, front)`` are then needed to offset the two arc lengths.
    """
    th_r = log_.rear_state[:, 13]
    th_f = log_.front_state[:, 13]
    if overtake_on == "theta":
        ahead = th_r >= th_f
    elif overtake_on == "sigma":
        if path is None or theta0 is None:
            raise ValueError("sigma crossing needs the path and the initial parameters")
        s_r = log_.rear_state[:, 14] + signed_arc_length(path, 0.0, theta0[0])
        s_f = log_.front_state[:, 14] + signed_arc_length(path, 0.0, theta0[1])
        ahead = s_r >= s_f
    else:
        raise ValueError("overtake_on must be 'theta' or 'sigma'")
    hits = np.flatnonzero(ahead)
    idx = int(hits[0]) if hits.size else None
    violations = int(np.count_nonzero(np.diff(th_r) < 0))
    if violations:
        log.info("rear progress decreased at %d samples in Race(%s,%s)",
                 violations, log_.front, log_.rear)
    return ProgressSeries(log_.t.copy(), th_r.copy(), th_f.copy(),
                          float(log_.t[idx]) if idx is not None else None, idx, violations)


@dataclass
class Inequality:
    """Fraction of window samples at which one Prog_rear relation holds."""

    name: str
    relation: str
    window: tuple[float, float]
    fraction: float
    threshold: float | None
    t: np.ndarray = field(repr=False)
    difference: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.threshold is None or self.fraction >= self.threshold

    def summary(self) -> dict:
        return {"name": self.name, "relation": self.relation, "window": list(self.window),
                "fraction": self.fraction, "threshold": self.threshold, "passed": self.passed}


@dataclass
class ComparisonReport:
    overtake_times: dict
    overtaking: list
    obstructing: list
    chains: list
    endpoint: dict

    @property
    def passed(self) -> bool:
        return (all(q.passed for q in self.overtaking + self.obstructing)
                and self.endpoint["holds"])

    def to_dict(self) -> dict:
        return {"overtake_times": self.overtake_times,
                "overtaking": [q.summary() for q in self.overtaking],
                "obstructing": [q.summary() for q in self.obstructing],
                "chains": [q.summary() for q in self.chains],
                "endpoint": self.endpoint, "passed": self.passed}

    def to_text(self) -> str:
        lines = ["overtake times (s):"]
        for k, v in self.overtake_times.items():
            lines.append(f"  Race({k}): {v:.3f}")
        for title, group in (("overtaking", self.overtaking), ("obstructing", self.obstructing),
                             ("chains", self.chains)):
            lines.append(f"{title}:")
            for q in group:
                thr = "" if q.threshold is None else f" (threshold {q.threshold:.2f})"
                verdict = "PASS" if q.passed else "FAIL"
                lines.append(f"  {verdict} {q.relation}: {q.fraction:.4f} of samples in "
                             f"[{q.window[0]:.3f}, {q.window[1]:.3f}] s{thr}")
        e = self.endpoint
        lines.append(f"endpoint at t={e['t']:.3f} s: Prog_rear(D,M)={e['prog_DM']:.6f} "
                     f"< Prog_rear(M,D)={e['prog_MD']:.6f}: {'PASS' if e['holds'] else 'FAIL'}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _as_progress(item) -> ProgressSeries:
    return item if isinstance(item, ProgressSeries) else extract_progress(item)


def _window_mask(t, start, end):
    return (t >= start - 1e-12) & (t <= end + 1e-12)


def compare_races(races: Mapping[str, RaceLog | ProgressSeries], window_start: float = 1.0,
                  overtaking_threshold: float = 0.9,
                  obstructing_threshold: float = 0.8) -> ComparisonReport:
    """Evaluate the overtaking and obstructing relations across the four races.

    ``races`` maps "B,A" (front, rear) to a log or a progress series for
    each of D,M / M,D / D,D / M,M. Each pairwise relation is scored on the
    window from ``window_start`` to the earlier overtake of its two races.

    Raises:
        IncompleteRaces: a race is missing or has no overtake.
    """
    prog = {}
    for key in (f"{b},{a}" for b, a in PAIRINGS):
        if key not in races:
            raise IncompleteRaces(f"Race({key}) is missing")
        prog[key] = _as_progress(races[key])
        if prog[key].t_ov is None:
            raise IncompleteRaces(f"Race({key}) has no overtake")
    t = prog["D,M"].t
    for p in prog.values():
        if p.t.shape != t.shape or not np.array_equal(p.t, t):
            raise ValueError("races must share the same time grid")

    def score(name, relation, lhs, rhs, threshold, keys):
        end = min(prog[k].t_ov for k in keys)
        mask = _window_mask(t, window_start, end)
        if not mask.any():
            return Inequality(name, relation, (window_start, end), float("nan"), threshold,
                              t[mask], np.zeros(0))
        cond = np.ones(mask.sum(), dtype=bool)
        for lo, hi in zip(lhs, rhs):
            cond &= prog[lo].theta[mask] < prog[hi].theta[mask]
        diff = prog[rhs[-1]].theta - prog[lhs[0]].theta
        return Inequality(name, relation, (window_start, end), float(cond.mean()), threshold,
                          t, diff)

    overtaking = [score(f"overtaking_{a}", f"Prog_rear({a},D) > Prog_rear({a},M)",
                        [f"{a},M"], [f"{a},D"], overtaking_threshold, [f"{a},M", f"{a},D"])
                  for a in ("M", "D")]
    obstructing = [score(f"obstructing_{a}", f"Prog_rear(D,{a}) < Prog_rear(M,{a})",
                         [f"D,{a}"], [f"M,{a}"], obstructing_threshold, [f"D,{a}", f"M,{a}"])
                   for a in ("M", "D")]
    chains = [score("chain_D", "Prog_rear(D,M) < Prog_rear(D,D) < Prog_rear(M,D)",
                    ["D,M", "D,D"], ["D,D", "M,D"], None, ["D,M", "D,D", "M,D"]),
              score("chain_M", "Prog_rear(D,M) < Prog_rear(M,M) < Prog_rear(M,D)",
                    ["D,M", "M,M"], ["M,M", "M,D"], None, ["D,M", "M,M", "M,D"])]
    end = min(prog["D,M"].t_ov, prog["M,D"].t_ov)
    i_end = int(np.flatnonzero(_window_mask(t, end, end))[0])
    p_dm, p_md = float(prog["D,M"].theta[i_end]), float(prog["M,D"].theta[i_end])
    endpoint = {"t": float(t[i_end]), "prog_DM": p_dm, "prog_MD": p_md, "holds": p_dm < p_md}
    return ComparisonReport({k: p.t_ov for k, p in prog.items()}, overtaking, obstructing,
                            chains, endpoint)
