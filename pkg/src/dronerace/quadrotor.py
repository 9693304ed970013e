"""Rigid-body quadrotor model.

State vector (13): position p, velocity v, body rates w, quaternion q with
the scalar part first. Inputs are the four rotor thrusts F1..F4 in newtons.

    dp/dt = v
    dv/dt = (1/m) Q3(q) (F1 + F2 + F3 + F4) - g e3
    dw/dt = -J^-1 (w x J w - T F)
    dq/dt = 1/2 Omega(w) q

Thrusts are unconstrained; the only regularizer anywhere in the package is
the quadratic input penalty in the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 13
INPUT_DIM = 4


@dataclass(frozen=True)
class DroneParams:
    """Physical constants of the drone. Defaults are the MamboFly values.

    Attributes:
        mass: kg
        gravity: m/s^2
        arm_length: distance from the centre of mass to each rotor, m
        jxx, jyy, jzz: diagonal inertia, kg m^2
        torque_constant: reaction torque per unit thrust, m
    """

    mass: float = 0.063
    gravity: float = 9.81
    arm_length: float = 0.0624
    jxx: float = 5.82857e-5
    jyy: float = 7.16914e-5
    jzz: float = 1e-4
    torque_constant: float = 0.0024

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"DroneParams.{name} must be strictly positive, got {value}")

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust that balances gravity."""
        return self.mass * self.gravity / 4.0

    @property
    def inertia(self) -> np.ndarray:
        return np.diag([self.jxx, self.jyy, self.jzz])

    def mixer(self) -> np.ndarray:
        """Thrust-to-torque matrix T (3 x 4)."""
        l, k = self.arm_length, self.torque_constant
        return np.array([[0.0, l, 0.0, -l],
                         [-l, 0.0, l, 0.0],
                         [k, -k, k, -k]])

    def as_array(self) -> np.ndarray:
        return np.array([self.mass, self.gravity, self.arm_length,
                         self.jxx, self.jyy, self.jzz, self.torque_constant])


@dataclass
class DroneState:
    """Named view of the 13-vector; ``np.asarray(state)`` gives the vector."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rates: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __array__(self, dtype=None, copy=None):
        x = np.concatenate([self.position, self.velocity, self.rates, self.quaternion])
        return x.astype(dtype) if dtype is not None else x

    @classmethod
    def from_array(cls, x) -> "DroneState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:9].copy(), x[9:13].copy())

    @classmethod
    def hover_at(cls, position) -> "DroneState":
        return cls(position=np.asarray(position, dtype=float).copy())


def rotation_matrix(q) -> np.ndarray:
    """Body-to-inertial rotation for a unit quaternion (scalar first)."""
    q0, q1, q2, q3 = np.asarray(q, dtype=float)
    return np.array([
        [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2 * (q1 * q2 - q0 * q3), 2 * (q0 * q2 + q1 * q3)],
        [2 * (q1 * q2 + q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2 * (q2 * q3 - q0 * q1)],
        [2 * (q1 * q3 - q0 * q2), 2 * (q0 * q1 + q2 * q3), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
    ])


def omega_matrix(w) -> np.ndarray:
    w1, w2, w3 = np.asarray(w, dtype=float)
    return np.array([[0.0, -w1, -w2, -w3],
                     [w1, 0.0, w3, -w2],
                     [w2, -w3, 0.0, w1],
                     [w3, w2, -w1, 0.0]])


def quaternion_rate(q, w) -> np.ndarray:
    """dq/dt = Omega(w) q / 2."""
    return 0.5 * omega_matrix(w) @ np.asarray(q, dtype=float)


def normalize_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def drone_derivative(x, u, params: DroneParams = DroneParams()) -> np.ndarray:
    """Time derivative of the 13-dimensional drone state."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    q = x[9:13]
    w = x[6:9]
    J = np.array([params.jxx, params.jyy, params.jzz])
    acc = rotation_matrix(q)[:, 2] * u.sum() / params.mass
    acc[2] -= params.gravity
    wdot = (params.mixer() @ u - np.cross(w, J * w)) / J
    return np.concatenate([x[3:6], acc, wdot, quaternion_rate(q, w)])
