"""Racing costs: path following, overtaking/obstructing potential, and the
NMPC and NRHDG problem assemblies built from them.

The plain functions here are readable numpy evaluations used for reporting
and as references in tests. The assembled problems carry compiled stage
functions with hand-derived gradients for the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .game_solver import Problem
from .paths import AUG_DIM, ParametricPath, SinusoidPath
from .quadrotor import DroneParams


@dataclass(frozen=True)
class CostWeights:
    """Path-following weights.

    ``position`` (a1..a3) penalizes deviation from the projection point,
    ``rates`` (a4..a6) body rates, ``progress`` (a7) rewards arc length and
    ``input_weight`` (b) penalizes thrust away from ``u_ref``.
    """

    position: tuple[float, float, float] = (1.0, 1.0, 1.0)
    rates: tuple[float, float, float] = (0.1, 0.1, 0.1)
    progress: float = 0.5
    input_weight: float = 20.0
    u_ref: float = DroneParams().hover_thrust

    def __post_init__(self):
        if min(self.position) < 0 or min(self.rates) < 0 or self.progress < 0:
            raise ValueError("state weights must be non-negative")
        if not self.input_weight > 0:
            raise ValueError("input weight b must be positive")

    @classmethod
    def for_drone(cls, params: DroneParams, input_weight: float, **kw) -> "CostWeights":
        return cls(input_weight=input_weight, u_ref=params.hover_thrust, **kw)

    def as_array(self) -> np.ndarray:
        return np.array([*self.position, *self.rates, self.progress, self.input_weight, self.u_ref])


@dataclass(frozen=True)
class PotentialParams:
    """Shape of the overtaking/obstructing potential.

    alpha: width of the Gaussian in the path-parameter gap
    beta: amplitude
    gamma: lateral decay in the deviation difference
    delta1: Gaussian centre
    delta2: tanh crossover; the potential changes sign here
    """

    alpha: float = 1.0
    beta: float = 4.0
    gamma: float = 5.0
    delta1: float = -0.5
    delta2: float = -1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise ValueError("alpha, beta and gamma must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.delta1, self.delta2])


@dataclass
class OpponentPrediction:
    """Constant-speed opponent model: moves parallel to the path at ``speed``."""

    position: np.ndarray
    theta: float
    speed: float = 1.0

    def __array__(self, dtype=None, copy=None):
        x = np.concatenate([self.position, [self.theta]])
        return x.astype(dtype) if dtype is not None else x


def stage_cost_pf(x, u, w: CostWeights, path: ParametricPath) -> float:
    x = np.asarray(x, dtype=float)
    return terminal_cost_pf(x, w, path) + w.input_weight * float(
        np.sum((np.asarray(u, dtype=float) - w.u_ref) ** 2))


def terminal_cost_pf(x, w: CostWeights, path: ParametricPath) -> float:
    x = np.asarray(x, dtype=float)
    dev = x[0:3] - path(x[13])
    return float(np.dot(w.position, dev ** 2) + np.dot(w.rates, x[6:9] ** 2) - w.progress * x[14])


def opponent_prediction_derivative(pred, path: ParametricPath, speed: float | None = None) -> np.ndarray:
    """(speed * r'(theta_op), speed) for the 4-vector (p_op, theta_op)."""
    if isinstance(pred, OpponentPrediction):
        speed = pred.speed if speed is None else speed
        theta = pred.theta
    else:
        theta = float(np.asarray(pred)[3])
    speed = 1.0 if speed is None else speed
    return np.concatenate([speed * path.derivatives(theta, 1)[1], [speed]])


def potential_shape(theta_gap: float, r2: float, pp: PotentialParams) -> float:
    """Potential as a function of the path-parameter gap and squared R."""
    z = (theta_gap - pp.delta1) / pp.alpha
    return float(np.exp(-z * z) * np.tanh(theta_gap - pp.delta2) * pp.beta / (1.0 + pp.gamma * r2))


def potential(x_ego, p_op, theta_op: float, pp: PotentialParams, path: ParametricPath) -> float:
    """Overtaking/obstructing potential seen by the ego drone.

    Positive (a hump at R = 0) while the opponent is ahead of the tanh
    crossover, negative (a well) once it falls behind it.
    """
    x_ego = np.asarray(x_ego, dtype=float)
    dev_ego = x_ego[0:3] - path(x_ego[13])
    dev_op = np.asarray(p_op, dtype=float) - path(theta_op)
    r2 = float(np.sum((dev_op - dev_ego) ** 2))
    return potential_shape(theta_op - x_ego[13], r2, pp)


def nmpc_stage_cost(x_m, u, w: CostWeights, pp: PotentialParams, path: ParametricPath) -> float:
    x_m = np.asarray(x_m, dtype=float)
    return stage_cost_pf(x_m[:AUG_DIM], u, w, path) + potential(x_m[:AUG_DIM], x_m[15:18], x_m[18], pp, path)


def nmpc_terminal_cost(x_m, w: CostWeights, pp: PotentialParams, path: ParametricPath) -> float:
    x_m = np.asarray(x_m, dtype=float)
    return terminal_cost_pf(x_m[:AUG_DIM], w, path) + potential(x_m[:AUG_DIM], x_m[15:18], x_m[18], pp, path)


def _mutual_potential(x_d, pp, path):
    ego, opp = x_d[:AUG_DIM], x_d[AUG_DIM:]
    return (potential(ego, opp[0:3], opp[13], pp, path)
            - potential(opp, ego[0:3], ego[13], pp, path))


def nrhdg_stage_cost(x_d, u_ego, u_opp, w_ego: CostWeights, w_opp: CostWeights,
                     pp: PotentialParams, path: ParametricPath) -> float:
    """Zero-sum stage cost: the ego's terms minus the opponent's."""
    x_d = np.asarray(x_d, dtype=float)
    return (stage_cost_pf(x_d[:AUG_DIM], u_ego, w_ego, path)
            - stage_cost_pf(x_d[AUG_DIM:], u_opp, w_opp, path)
            + _mutual_potential(x_d, pp, path))


def nrhdg_terminal_cost(x_d, w_ego: CostWeights, w_opp: CostWeights,
                        pp: PotentialParams, path: ParametricPath) -> float:
    x_d = np.asarray(x_d, dtype=float)
    return (terminal_cost_pf(x_d[:AUG_DIM], w_ego, path)
            - terminal_cost_pf(x_d[AUG_DIM:], w_opp, path)
            + _mutual_potential(x_d, pp, path))


# --------------------------------------------------------------------------
# Problem assemblies


class PathFollowingProblem(Problem):
    """One augmented drone following the path with no opponent (15 states, 4 inputs)."""

    kind = _kernels.KIND_PF
    nx = AUG_DIM
    nu = 4
    n_min = 4

    def __init__(self, path: SinusoidPath, params: DroneParams, weights: CostWeights):
        self.path = path
        self.drone = params
        self.weights = weights
        terms, lin = path.kernel_args
        self.params = _kernels.pack_race_params(params.as_array(), weights.as_array(),
                                                weights.as_array(), PotentialParams().as_array(),
                                                0.0, terms, lin)

    def hover_input(self) -> np.ndarray:
        return np.full(4, self.drone.hover_thrust)

    def stage_cost(self, x, u):
        return stage_cost_pf(x, u, self.weights, self.path)

    def terminal_cost(self, x):
        return terminal_cost_pf(x, self.weights, self.path)


class NMPCProblem(Problem):
    """Ego drone plus constant-speed opponent prediction (19 states, 4 inputs)."""

    kind = _kernels.KIND_NMPC
    nx = 19
    nu = 4
    n_min = 4

    def __init__(self, path: SinusoidPath, params: DroneParams, weights: CostWeights,
                 pp: PotentialParams, opponent_speed: float = 1.0):
        self.path = path
        self.drone = params
        self.weights = weights
        self.potential_params = pp
        self.opponent_speed = opponent_speed
        terms, lin = path.kernel_args
        self.params = _kernels.pack_race_params(params.as_array(), weights.as_array(),
                                                weights.as_array(), pp.as_array(),
                                                opponent_speed, terms, lin)

    def hover_input(self) -> np.ndarray:
        return np.full(4, self.drone.hover_thrust)

    def stage_cost(self, x, u):
        return nmpc_stage_cost(x, u, self.weights, self.potential_params, self.path)

    def terminal_cost(self, x):
        return nmpc_terminal_cost(x, self.weights, self.potential_params, self.path)


class NRHDGProblem(Problem):
    """Zero-sum game of two augmented drones (30 states, 4 + 4 inputs).

    The first four inputs belong to the minimizing ego drone, the last four
    to the maximizing opponent.
    """

    kind = _kernels.KIND_NRHDG
    nx = 30
    nu = 8
    n_min = 4

    def __init__(self, path: SinusoidPath, params: DroneParams, w_ego: CostWeights,
                 w_opp: CostWeights, pp: PotentialParams):
        self.path = path
        self.drone = params
        self.w_ego = w_ego
        self.w_opp = w_opp
        self.potential_params = pp
        terms, lin = path.kernel_args
        self.params = _kernels.pack_race_params(params.as_array(), w_ego.as_array(),
                                                w_opp.as_array(), pp.as_array(), 0.0, terms, lin)

    def hover_input(self) -> np.ndarray:
        return np.full(8, self.drone.hover_thrust)

    def stage_cost(self, x, u):
        u = np.asarray(u, dtype=float)
        return nrhdg_stage_cost(x, u[:4], u[4:], self.w_ego, self.w_opp, self.potential_params, self.path)

    def terminal_cost(self, x):
        return nrhdg_terminal_cost(x, self.w_ego, self.w_opp, self.potential_params, self.path)
