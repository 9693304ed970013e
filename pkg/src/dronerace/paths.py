"""Parametric paths and the projection-point dynamics.

A drone at p is tracked by the path parameter theta_d of its orthogonal
projection onto r(theta). Instead of re-solving the distance minimization
every step, theta_d is integrated as a state:

    dtheta_d/dt = v . r'(theta_d) / (|r'|^2 + (r(theta_d) - p) . r'')
    dsigma/dt   = |r'(theta_d)| dtheta_d/dt

which keeps (r(theta_d) - p) . r'(theta_d) = 0 along the trajectory as
long as the denominator stays positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _kernels
from .errors import NoProjectionFound, SingularProjection
from .quadrotor import DroneParams, drone_derivative

AUG_DIM = 15
SING_EPS = _kernels.SING_EPS


class ParametricPath:
    """A regular, twice-differentiable curve r(theta) on [theta_min, theta_max].

    Subclasses implement ``derivatives``; everything else builds on it.
    """

    theta_min: float = -np.inf
    theta_max: float = np.inf

    def derivatives(self, theta: float, order: int = 2) -> tuple[np.ndarray, ...]:
        """Return (r, dr, ..., d^order r) at theta."""
        raise NotImplementedError

    def evaluate(self, theta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.derivatives(theta, 2)

    def __call__(self, theta: float) -> np.ndarray:
        return self.derivatives(theta, 0)[0]

    def position_grid(self, thetas: np.ndarray) -> np.ndarray:
        """Positions for an array of parameters, shape (n, 3)."""
        return np.array([self(t) for t in thetas])


@dataclass(frozen=True)
class SinusoidPath(ParametricPath):
    """Sum-of-sinusoids curve with analytic derivatives of every order.

    Component i of r(theta) is ``slope[i]*theta + offset[i]`` plus every term
    ``amplitude * sin(frequency*theta + phase)`` registered for that
    component. Lines, circles, helices and the race course all fit.

    Attributes:
        terms: (K, 4) rows of (component, amplitude, frequency, phase)
        slope, offset: linear part, one entry per axis
    """

    terms: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    slope: np.ndarray = field(default_factory=lambda: np.zeros(3))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_min: float = -np.inf
    theta_max: float = np.inf
    name: str = "custom"

    def __post_init__(self):
        terms = np.ascontiguousarray(np.asarray(self.terms, dtype=float).reshape(-1, 4))
        if terms.size and not np.all(np.isin(terms[:, 0], (0.0, 1.0, 2.0))):
            raise ValueError("term component index must be 0, 1 or 2")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "slope", np.asarray(self.slope, dtype=float).reshape(3))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(3))
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be below theta_max")

    @property
    def lin(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([self.slope, self.offset]))

    @property
    def kernel_args(self) -> tuple[np.ndarray, np.ndarray]:
        return self.terms, self.lin

    def derivatives(self, theta, order=2):
        out = [self.slope * theta + self.offset, self.slope.copy(),
               np.zeros(3), np.zeros(3)]
        for c, a, w, ph in self.terms:
            c = int(c)
            s, co = np.sin(w * theta + ph), np.cos(w * theta + ph)
            out[0][c] += a * s
            out[1][c] += a * w * co
            out[2][c] -= a * w * w * s
            out[3][c] -= a * w ** 3 * co
        return tuple(out[: order + 1])

    def position_grid(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        pts = np.outer(thetas, self.slope) + self.offset
        for c, a, w, ph in self.terms:
            pts[:, int(c)] += a * np.sin(w * thetas + ph)
        return pts

    def with_range(self, theta_min: float, theta_max: float) -> "SinusoidPath":
        return SinusoidPath(self.terms, self.slope, self.offset, theta_min, theta_max, self.name)

    def to_config(self) -> dict:
        comps = {}
        for i, axis in enumerate("xyz"):
            rows = [[float(a), float(w), float(ph)] for c, a, w, ph in self.terms if int(c) == i]
            comps[axis] = {"terms": rows, "slope": float(self.slope[i]), "offset": float(self.offset[i])}
        return {"name": self.name, "theta_range": [float(self.theta_min), float(self.theta_max)],
                "components": comps}

    @classmethod
    def from_config(cls, cfg: dict) -> "SinusoidPath":
        terms = []
        slope = np.zeros(3)
        offset = np.zeros(3)
        for i, axis in enumerate("xyz"):
            comp = cfg.get("components", {}).get(axis, {})
            for row in comp.get("terms", []):
                if len(row) != 3:
                    raise ValueError(f"path term for {axis} must be [amplitude, frequency, phase]")
                terms.append([i, *map(float, row)])
            slope[i] = float(comp.get("slope", 0.0))
            offset[i] = float(comp.get("offset", 0.0))
        lo, hi = cfg.get("theta_range", [-np.inf, np.inf])
        return cls(np.array(terms).reshape(-1, 4), slope, offset, float(lo), float(hi),
                   cfg.get("name", "custom"))


def race_path(theta_min: float = -2.0, theta_max: float = 60.0) -> SinusoidPath:
    """The benchmark course r(theta) = (6 sin t, 3 sin 2t, 6 sin t/2)."""
    terms = [[0, 6.0, 1.0, 0.0], [1, 3.0, 2.0, 0.0], [2, 6.0, 0.5, 0.0]]
    return SinusoidPath(np.array(terms), theta_min=theta_min, theta_max=theta_max,
                        name="paper-course")


def line_path(direction=(1.0, 0.0, 0.0), origin=(0.0, 0.0, 0.0), **kw) -> SinusoidPath:
    return SinusoidPath(np.zeros((0, 4)), direction, origin, name="line", **kw)


def circle_path(radius: float = 1.0, **kw) -> SinusoidPath:
    terms = [[0, radius, 1.0, np.pi / 2], [1, radius, 1.0, 0.0]]
    return SinusoidPath(np.array(terms), name="circle", **kw)


def helix_path(radius: float = 1.0, pitch: float = 1.0, **kw) -> SinusoidPath:
    terms = [[0, radius, 1.0, np.pi / 2], [1, radius, 1.0, 0.0]]
    return SinusoidPath(np.array(terms), slope=(0.0, 0.0, pitch), name="helix", **kw)


NAMED_PATHS = {"paper-course": race_path}


# --------------------------------------------------------------------------


def stationarity_residual(path: ParametricPath, theta: float, p) -> float:
    """(r(theta) - p) . r'(theta); zero at a stationary point of the distance."""
    r, dr = path.derivatives(theta, 1)
    return float((r - np.asarray(p, dtype=float)) @ dr)


def projection_curvature(path: ParametricPath, theta: float, p) -> float:
    """|r'|^2 + (r - p) . r'', half the second derivative of |r - p|^2."""
    r, dr, ddr = path.derivatives(theta, 2)
    return float(dr @ dr + (r - np.asarray(p, dtype=float)) @ ddr)


def singularity_margin(path: ParametricPath, theta: float, p) -> float:
    """|r'|^2 - |r - p| |r''|; positive certifies a nonsingular projection."""
    r, dr, ddr = path.derivatives(theta, 2)
    dev = np.linalg.norm(r - np.asarray(p, dtype=float))
    return float(dr @ dr - dev * np.linalg.norm(ddr))


def _newton_projection(path, p, theta, tol=1e-10, max_iter=100):
    lo, hi = path.theta_min, path.theta_max
    for _ in range(max_iter):
        r, dr, ddr = path.derivatives(theta, 2)
        g = (r - p) @ dr
        hess = dr @ dr + (r - p) @ ddr
        if abs(g) < tol and hess > 0:
            return theta
        if hess <= 0:
            # walk downhill on the distance instead of towards a maximum
            step = -np.sign(g) * 1e-2
        else:
            step = -g / hess
        theta = min(max(theta + step, lo), hi)
    return None


def solve_initial_projection(path: ParametricPath, p, hint: float | None = None,
                             samples: int = 1000) -> float:
    """Path parameter of a local projection point of p.

    With no hint, the global minimizer of |r(theta) - p| over a uniform scan
    of ``samples`` points is refined by Newton. With a hint, Newton starts at
    the hint; if that fails, the local minima of the scan are refined and the
    one closest to the hint is returned.

    Raises:
        NoProjectionFound: Newton failed from every candidate.
    """
    p = np.asarray(p, dtype=float)
    if hint is not None:
        th = _newton_projection(path, p, float(hint))
        if th is not None:
            return th
    lo, hi = path.theta_min, path.theta_max
    if not (np.isfinite(lo) and np.isfinite(hi)):
        if hint is None:
            raise NoProjectionFound("an unbounded path needs a hint")
        lo, hi = hint - 10.0, hint + 10.0
    grid = np.linspace(lo, hi, samples)
    dist = np.linalg.norm(path.position_grid(grid) - p, axis=1)
    # local minima of the sampled distance, endpoints included
    left = np.r_[np.inf, dist[:-1]]
    right = np.r_[dist[1:], np.inf]
    idx = np.flatnonzero((dist <= left) & (dist <= right))
    if hint is None:
        idx = idx[np.argsort(dist[idx], kind="stable")]
    else:
        idx = idx[np.argsort(np.abs(grid[idx] - hint), kind="stable")]
    for i in idx:
        th = _newton_projection(path, p, grid[i])
        if th is not None:
            return th
    raise NoProjectionFound(f"no projection of {p} converged from {idx.size} candidates")


def projection_rate(path: ParametricPath, theta: float, p, pdot) -> float:
    """dtheta_d/dt for a drone at p moving with velocity pdot.

    Raises:
        SingularProjection: the denominator is not above 1e-6 |r'|^2.
    """
    r, dr, ddr = path.derivatives(theta, 2)
    t2 = dr @ dr
    den = t2 + (r - np.asarray(p, dtype=float)) @ ddr
    if not den > SING_EPS * t2:
        raise SingularProjection(f"projection denominator {den:.3e} at theta={theta:.6f}",
                                 theta=theta, margin=den)
    return float(np.asarray(pdot, dtype=float) @ dr / den)


def arc_length_rate(path: ParametricPath, theta: float, theta_rate: float) -> float:
    return float(np.linalg.norm(path.derivatives(theta, 1)[1]) * theta_rate)


def signed_arc_length(path: ParametricPath, theta0: float, theta1: float) -> float:
    """Integral of |r'| from theta0 to theta1; negative when theta1 < theta0."""
    if theta0 == theta1:
        return 0.0
    val, _ = integrate.quad(lambda t: np.linalg.norm(path.derivatives(t, 1)[1]),
                            theta0, theta1, epsabs=1e-10, epsrel=1e-12, limit=200)
    return float(val)


def augmented_derivative(x, u, path: ParametricPath, params: DroneParams = DroneParams()) -> np.ndarray:
    """15-dimensional derivative: drone state, projection parameter, arc length."""
    x = np.asarray(x, dtype=float)
    head = drone_derivative(x[:13], u, params)
    thd = projection_rate(path, x[13], x[0:3], x[3:6])
    return np.concatenate([head, [thd, arc_length_rate(path, x[13], thd)]])


def augmented_state(state, path: ParametricPath, hint: float | None = None,
                    sigma: float = 0.0) -> np.ndarray:
    """Append a solved projection parameter and an arc length to a 13-state."""
    x = np.asarray(state, dtype=float)
    theta = solve_initial_projection(path, x[0:3], hint)
    return np.concatenate([x[:13], [theta, sigma]])
