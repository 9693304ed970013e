"""Continuation/GMRES real-time solver for receding-horizon OCPs and games.

The horizon [t, t+T] is split into N Euler stages. For stacked stage inputs
U the optimality residual is

    F(U, x) = dtau * (H_u(x_0, u_0, lam_1), ..., H_u(x_{N-1}, u_{N-1}, lam_N))

with lam_N = phi_x(x_N) and lam_k = lam_{k+1} + dtau H_x(x_k, u_k, lam_{k+1}),
which is exactly the gradient of the discretized cost. For a zero-sum game
the inputs of both players are stacked per stage and F = 0 is the saddle
condition, so the same machinery serves NMPC and NRHDG: nothing here
minimizes, it only drives F to zero.

Rather than re-solving F = 0 each cycle, U is tracked by integrating

    (dF/dU) dU/dt = -zeta F - (dF/dx) dx/dt

with the linear system solved matrix-free by restarted GMRES on
forward-difference directional derivatives. Problems are time-invariant,
so the explicit dF/dt term vanishes.

The game Jacobian dF/dU is symmetric indefinite (one negative eigenvalue
per maximizer input) with a wide spread of magnitudes, on which a handful
of unpreconditioned Krylov iterations make no progress. GMRES is therefore
right-preconditioned by the inverse of an earlier dF/dU. That matrix is
rebuilt a few forward-difference columns per control cycle and inverted
once all columns are in, so the extra work is spread evenly.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InitializationFailed, NonFiniteResidual, SingularProjection

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HorizonDiscretization:
    horizon: float = 0.4
    stages: int = 20

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon length must be positive")
        if self.stages < 1:
            raise ValueError("need at least one stage")

    @property
    def dtau(self) -> float:
        return self.horizon / self.stages


@dataclass(frozen=True)
class SolverSettings:
    """Tuning of the continuation solver.

    ``zeta=None`` means 1 / control cycle, set when the solver is built.
    ``precond_columns`` columns of the preconditioner are refreshed per
    update when ``preconditioner`` is on. After Newton initialization up to
    ``saddle_escapes`` steps leave a stationary point whose curvature is
    wrong for one of the players (below ``-curvature_tol``).
    """

    horizon: float = 0.4
    stages: int = 20
    zeta: float | None = None
    fd_step: float = 1e-6
    krylov_dim: int = 5
    restarts: int = 1
    krylov_tol: float = 1e-4
    newton_tol: float = 1e-6
    newton_max_iter: int = 50
    init_fail_tol: float = 1e-2
    preconditioner: bool = True
    precond_columns: int = 4
    saddle_escapes: int = 3
    curvature_tol: float = 1e-6
    escape_lengths: tuple = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)

    @property
    def discretization(self) -> HorizonDiscretization:
        return HorizonDiscretization(self.horizon, self.stages)


class Problem:
    """A receding-horizon problem expressed through compiled stage functions.

    Subclasses set ``nx``, ``nu``, ``n_min`` (leading inputs owned by the
    minimizer; the rest belong to a maximizer), ``kind`` selecting the
    compiled stage functions, and the flat ``params`` vector they receive.
    """

    nx: int
    nu: int
    n_min: int
    params: np.ndarray
    kind: int = -1

    @staticmethod
    def _buffer(blocks: int = 1):
        return np.zeros((8 * blocks, 3))

    def f(self, x, u) -> np.ndarray:
        out = np.empty(self.nx)
        st = _kernels.stage_f(self.kind, np.asarray(x, dtype=float), 0, np.asarray(u, dtype=float), 0,
                           self.params, out, 0, self._buffer(), 0)
        if st != _kernels.OK:
            raise SingularProjection("singular projection in the prediction model")
        return out

    def hamiltonian_gradients(self, x, u, lam) -> tuple[np.ndarray, np.ndarray]:
        gx = np.empty(self.nx)
        gu = np.empty(self.nu)
        _kernels.stage_hxu(self.kind, np.asarray(x, dtype=float), 0, np.asarray(u, dtype=float), 0,
                        np.asarray(lam, dtype=float), 0, self.params, gx, gu, self._buffer(), 0, True)
        return gx, gu

    def terminal_gradient(self, x) -> np.ndarray:
        gx = np.empty(self.nx)
        _kernels.stage_phix(self.kind, np.asarray(x, dtype=float), 0, self.params, gx,
                            self._buffer(), 0)
        return gx

    def hover_input(self) -> np.ndarray:
        return np.zeros(self.nu)

    def stage_cost(self, x, u) -> float:
        raise NotImplementedError

    def terminal_cost(self, x) -> float:
        raise NotImplementedError

    def residual(self, x0, U, disc: HorizonDiscretization, X=None, Lam=None) -> np.ndarray:
        """Compiled evaluation of F(U, x0).

        ``X`` and ``Lam``, if given, are flat (N + 1) * nx workspaces that
        receive the predicted states and costates.
        """
        N = disc.stages
        X = np.empty((N + 1) * self.nx) if X is None else X
        Lam = np.empty((N + 1) * self.nx) if Lam is None else Lam
        out = np.empty(N * self.nu)
        st = _kernels.residual(self.kind, self.params, np.asarray(x0, dtype=float),
                                  np.asarray(U, dtype=float), N, self.nx, self.nu, disc.dtau,
                                  X, Lam, out, self._buffer(N + 1))
        _raise_status(st)
        return out


class LQProblem(Problem):
    """f = A x + B u, L = (x'Qx + u'Ru)/2, phi = x'Sx/2.

    With ``n_min`` smaller than the input count and a negative-definite
    block of R for the remaining inputs, this is a zero-sum LQ game.
    """

    kind = _kernels.KIND_LQ

    def __init__(self, A, B, Q, R, S, n_min: int | None = None):
        mats = [np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R, S)]
        self.A, self.B, self.Q, self.R, self.S = (np.ascontiguousarray(M) for M in mats)
        self.nx = self.A.shape[0]
        self.nu = self.B.shape[1]
        self.n_min = self.nu if n_min is None else n_min
        self.params = np.concatenate([[self.nx, self.nu]] + [M.ravel() for M in
                                                             (self.A, self.B, self.Q, self.R, self.S)])

    @classmethod
    def game(cls, A, B_min, B_max, Q, R_min, R_max, S) -> "LQProblem":
        """Zero-sum game: the maximizer's input is penalized by -v'R_max v/2."""
        B_min, B_max = np.atleast_2d(B_min), np.atleast_2d(B_max)
        R_min, R_max = np.atleast_2d(R_min), np.atleast_2d(R_max)
        nu, nv = B_min.shape[1], B_max.shape[1]
        R = np.zeros((nu + nv, nu + nv))
        R[:nu, :nu] = R_min
        R[nu:, nu:] = -R_max
        return cls(A, np.hstack([B_min, B_max]), Q, R, S, n_min=nu)

    def stage_cost(self, x, u):
        x, u = np.atleast_1d(x), np.atleast_1d(u)
        return 0.5 * float(x @ self.Q @ x + u @ self.R @ u)

    def terminal_cost(self, x):
        x = np.atleast_1d(x)
        return 0.5 * float(x @ self.S @ x)


def _raise_status(st):
    if st == _kernels.SINGULAR:
        raise SingularProjection("singular projection inside the horizon prediction")
    if st == _kernels.NONFINITE:
        raise NonFiniteResidual("optimality residual is not finite")


def predict_states(x0, U, disc: HorizonDiscretization, dynamics, nu: int) -> np.ndarray:
    """Forward-Euler prediction, shape (N + 1, nx). ``dynamics(x, u)`` -> dx/dt."""
    x = np.asarray(x0, dtype=float)
    U = np.asarray(U, dtype=float).reshape(disc.stages, nu)
    states = [x]
    for u in U:
        x = x + disc.dtau * np.asarray(dynamics(x, u), dtype=float)
        states.append(x)
    return np.array(states)


def stationarity_residual_ocp(x0, U, t, disc: HorizonDiscretization, problem: Problem) -> np.ndarray:
    """Stacked dtau * H_u over the horizon, evaluated stage by stage.

    Reference implementation of the compiled ``Problem.residual``; ``t`` is
    accepted for interface symmetry and unused by time-invariant problems.
    """
    nu = problem.nu
    U = np.asarray(U, dtype=float).reshape(disc.stages, nu)
    X = predict_states(x0, U.ravel(), disc, problem.f, nu)
    lam = problem.terminal_gradient(X[-1])
    F = np.empty_like(U)
    for k in range(disc.stages - 1, -1, -1):
        hx, hu = problem.hamiltonian_gradients(X[k], U[k], lam)
        F[k] = disc.dtau * hu
        lam = lam + disc.dtau * hx
    return F.ravel()


@dataclass
class ControllerOutput:
    """Result of one solver update.

    ``u`` is the input applied now (the minimizer's part for games);
    ``u_max`` the maximizer's predicted current input, if any.
    """

    u: np.ndarray
    stage_inputs: np.ndarray
    residual_norm: float
    solve_time: float
    u_max: np.ndarray | None = None
    linear_residual: float = float("nan")
    krylov_breakdown: bool = False


@dataclass
class SolverProblem:
    """Mutable solver state for one controller: U, its rate, workspaces."""

    problem: Problem
    disc: HorizonDiscretization
    U: np.ndarray
    zeta: float
    fd_step: float = 1e-6
    krylov_dim: int = 5
    restarts: int = 1
    krylov_tol: float = 1e-4
    Udot: np.ndarray = None
    X: np.ndarray = field(default=None, repr=False)
    Lam: np.ndarray = field(default=None, repr=False)
    newton_iterations: int = 0
    breakdowns: int = 0
    preconditioner: bool = False
    precond_columns: int = 4
    Minv: np.ndarray = field(default=None, repr=False)
    Jnew: np.ndarray = field(default=None, repr=False)
    next_column: int = 0

    def __post_init__(self):
        n = self.disc.stages * self.problem.nu
        self.U = np.array(self.U, dtype=float).reshape(n)
        if self.Udot is None:
            self.Udot = np.zeros(n)
        size = (self.disc.stages + 1) * self.problem.nx
        if self.X is None:
            self.X = np.empty(size)
        if self.Lam is None:
            self.Lam = np.empty(size)
        self._pb = np.zeros((8 * (self.disc.stages + 1), 3))
        if self.Minv is None:
            self.Minv = np.eye(n)
        if self.Jnew is None:
            self.Jnew = np.eye(n)

    def residual(self, x, U=None) -> np.ndarray:
        return self.problem.residual(x, self.U if U is None else U, self.disc, self.X, self.Lam)

    @property
    def stage_inputs(self) -> np.ndarray:
        return self.U.reshape(self.disc.stages, self.problem.nu)

    def predicted_states(self, x) -> np.ndarray:
        """States predicted over the horizon from x under the current U."""
        self.residual(x)
        return self.X.reshape(self.disc.stages + 1, self.problem.nx).copy()


def _fd_jacobian(solver: "SolverProblem", x0, U, step):
    p = solver.problem
    J = np.empty((U.size, U.size))
    st = _kernels.residual_jacobian(p.kind, p.params, x0, U, solver.disc.stages, p.nx, p.nu, solver.disc.dtau,
                           step, solver.X, solver.Lam, solver._pb, J)
    _raise_status(st)
    return J


def initialize_solver(x0, t0, problem: Problem, disc: HorizonDiscretization | None = None,
                      settings: SolverSettings = SolverSettings(), control_cycle: float = 1e-3,
                      U_guess=None) -> SolverProblem:
    """Build a solver and converge U at (x0, t0) by damped Newton.

    Starts from the hover input at every stage unless ``U_guess`` is given.

    Raises:
        InitializationFailed: |F| never dropped below ``settings.init_fail_tol``.
    """
    disc = settings.discretization if disc is None else disc
    zeta = settings.zeta if settings.zeta is not None else 1.0 / control_cycle
    if U_guess is None:
        U_guess = np.tile(problem.hover_input(), disc.stages)
    solver = SolverProblem(problem, disc, U_guess, zeta, settings.fd_step,
                           settings.krylov_dim, settings.restarts, settings.krylov_tol,
                           preconditioner=settings.preconditioner,
                           precond_columns=settings.precond_columns)
    x0 = np.asarray(x0, dtype=float)

    def fun(U):
        try:
            return solver.residual(x0, U)
        except (SingularProjection, NonFiniteResidual):
            return np.full(U.size, np.inf)

    def newton(U):
        F = fun(U)
        fnorm = np.linalg.norm(F)
        it = 0
        while it < settings.newton_max_iter and not fnorm < settings.newton_tol:
            if not np.isfinite(fnorm):
                break
            try:
                J = _fd_jacobian(solver, x0, U, 1e-5)
            except (SingularProjection, NonFiniteResidual):
                break
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
            alpha = 1.0
            while alpha > 1e-4:
                F_new = fun(U + alpha * step)
                if np.linalg.norm(F_new) < fnorm:
                    break
                alpha *= 0.5
            else:
                log.warning("Newton initialization stalled at |F|=%.3e", fnorm)
                break
            U = U + alpha * step
            F = F_new
            fnorm = np.linalg.norm(F)
            it += 1
        return U, F, fnorm, it

    U, F, fnorm, it = newton(solver.U.copy())
    if not fnorm < settings.newton_tol and problem.n_min == problem.nu:
        # a single player can fall back on descent of its own cost
        U2, F2, fn2, it2 = _descend(solver, x0, solver.U.copy(), settings)
        it += it2
        if fn2 < fnorm:
            U, F, fnorm = U2, F2, fn2
    if fnorm < settings.init_fail_tol and settings.saddle_escapes > 0:
        U, F, fnorm, extra = _escape_wrong_curvature(solver, x0, U, F, fnorm, settings, newton)
        it += extra
    solver.U = U
    solver.newton_iterations = it
    log.debug("initialized after %d Newton iterations, |F|=%.3e", it, fnorm)
    if not fnorm < settings.init_fail_tol:
        raise InitializationFailed(f"|F| = {fnorm:.3e} after {it} Newton iterations")
    if solver.preconditioner:
        _install_preconditioner(solver, _fd_jacobian(solver, x0, U, 1e-5))
    _warm_up(solver, x0)
    return solver


def horizon_cost(solver: SolverProblem, x0, U) -> float:
    """Discretized objective sum(dtau * L(x_k, u_k)) + phi(x_N) under U."""
    p, disc = solver.problem, solver.disc
    X = predict_states(x0, U, disc, p.f, p.nu)
    Us = np.asarray(U, dtype=float).reshape(disc.stages, p.nu)
    return float(disc.dtau * sum(p.stage_cost(X[k], Us[k]) for k in range(disc.stages))
                 + p.terminal_cost(X[-1]))


def _player_blocks(problem: Problem, stages: int):
    """Index sets of the minimizer's and (for games) the maximizer's inputs in U."""
    idx = np.arange(stages * problem.nu).reshape(stages, problem.nu)
    blocks = [(idx[:, :problem.n_min].ravel(), 1.0)]
    if problem.n_min < problem.nu:
        blocks.append((idx[:, problem.n_min:].ravel(), -1.0))
    return blocks


def _wrong_curvature(solver, x0, U):
    """Most negative curvature of either player's own block of dF/dU.

    The minimizer's block should be positive definite at a local minimum
    and the maximizer's negative definite. Returns (value, direction in U,
    player sign) for the worst violation, or None.
    """
    J = _fd_jacobian(solver, x0, U, 1e-5)
    J = 0.5 * (J + J.T)
    worst = None
    for idx, sign in _player_blocks(solver.problem, solver.disc.stages):
        w, V = np.linalg.eigh(sign * J[np.ix_(idx, idx)])
        if worst is None or w[0] < worst[0]:
            d = np.zeros(U.size)
            d[idx] = V[:, 0]
            worst = (w[0], d, sign)
    return worst


def _descend(solver, x0, U, settings):
    """Saddle-free Newton on the horizon cost of a single-player problem.

    F is the gradient of the discretized cost and dF/dU its Hessian, so
    steps use the Hessian with eigenvalues replaced by their magnitudes and
    are halved until the cost decreases. Negative curvature then pushes
    away from saddles instead of towards them.
    """
    def grad(U):
        try:
            return solver.residual(x0, U)
        except (SingularProjection, NonFiniteResidual):
            return np.full(U.size, np.inf)

    F = grad(U)
    fnorm = np.linalg.norm(F)
    c = horizon_cost(solver, x0, U)
    it = 0
    while it < settings.newton_max_iter and not fnorm < settings.newton_tol:
        try:
            J = _fd_jacobian(solver, x0, U, 1e-5)
        except (SingularProjection, NonFiniteResidual):
            break
        w, V = np.linalg.eigh(0.5 * (J + J.T))
        w = np.maximum(np.abs(w), 1e-6 * np.abs(w).max())
        step = -V @ ((V.T @ F) / w)
        alpha = 1.0
        while alpha > 1e-6:
            trial = U + alpha * step
            try:
                c_new = horizon_cost(solver, x0, trial)
            except (SingularProjection, NonFiniteResidual):
                c_new = np.inf
            if c_new < c:
                break
            alpha *= 0.5
        else:
            break
        U, c = trial, c_new
        F = grad(U)
        fnorm = np.linalg.norm(F)
        it += 1
    return U, F, fnorm, it


def _escape_wrong_curvature(solver, x0, U, F, fnorm, settings, newton):
    """Move off a stationary point that is not a local optimum for its player.

    From a symmetric start (both drones exactly on the path) Newton on F = 0
    can settle on the top of the potential hump, a saddle of the NMPC cost.
    Continuation from there runs into the fold where that saddle meets a
    minimum. The fix steps along the offending eigenvector, choosing sign
    and length by the player's objective, and re-runs Newton.
    """
    extra = 0
    for _ in range(settings.saddle_escapes):
        try:
            worst = _wrong_curvature(solver, x0, U)
        except (SingularProjection, NonFiniteResidual):
            break
        if worst is None or worst[0] >= -settings.curvature_tol:
            break
        curvature, d, sign = worst
        try:
            c0 = sign * horizon_cost(solver, x0, U)
        except (SingularProjection, NonFiniteResidual):
            break
        best = None
        for length in settings.escape_lengths:
            for direction in (1.0, -1.0):
                trial = U + direction * length * d
                try:
                    c = sign * horizon_cost(solver, x0, trial)
                except (SingularProjection, NonFiniteResidual):
                    continue
                if np.isfinite(c) and c < c0 and (best is None or c < best[0]):
                    best = (c, trial)
        if best is None:
            break
        if solver.problem.n_min == solver.problem.nu:
            U_new, F_new, fn_new, it = _descend(solver, x0, best[1], settings)
        else:
            U_new, F_new, fn_new, it = newton(best[1])
        extra += it
        if not fn_new < settings.init_fail_tol:
            break
        log.debug("left a stationary point with curvature %.3e; |F|=%.3e", curvature, fn_new)
        U, F, fnorm = U_new, F_new, fn_new
    return U, F, fnorm, extra


def _warm_up(solver: SolverProblem, x0):
    """Run one throw-away update so compilation is not billed to the first cycle."""
    p = solver.problem
    xdot = np.zeros(p.nx)
    _kernels.cgmres_step(
        p.kind, p.params, x0, xdot, solver.U.copy(),
        solver.Udot.copy(), solver.disc.stages, p.nx, p.nu, solver.disc.dtau, solver.fd_step,
        solver.zeta, 0.0, solver.krylov_dim, solver.restarts, solver.krylov_tol,
        solver.X, solver.Lam, solver._pb, solver.Minv, solver.preconditioner,
        solver.Jnew.copy(), 0, 1)


def _install_preconditioner(solver: SolverProblem, J: np.ndarray) -> bool:
    try:
        Minv = np.linalg.inv(J)
    except np.linalg.LinAlgError:
        log.warning("singular Jacobian; keeping the previous preconditioner")
        return False
    if not np.all(np.isfinite(Minv)):
        log.warning("non-finite preconditioner; keeping the previous one")
        return False
    solver.Minv = Minv
    return True


def continuation_update(solver: SolverProblem, x_now, t_now: float, dt: float) -> ControllerOutput:
    """Advance U by one control cycle and return the current input.

    Raises:
        SingularProjection: a predicted state crossed the projection singularity.
        NonFiniteResidual: the residual is NaN or infinite.
    """
    p = solver.problem
    x_now = np.asarray(x_now, dtype=float)
    start = time.perf_counter()
    xdot = np.empty(p.nx)
    st = _kernels.stage_f(p.kind, x_now, 0, solver.U, 0, p.params, xdot, 0, solver._pb, 0)
    if st != _kernels.OK:
        _raise_status(_kernels.SINGULAR)
    st, fnorm, res0, res1 = _kernels.cgmres_step(
        p.kind, p.params, x_now, xdot, solver.U, solver.Udot,
        solver.disc.stages, p.nx, p.nu, solver.disc.dtau, solver.fd_step, solver.zeta, dt,
        solver.krylov_dim, solver.restarts, solver.krylov_tol, solver.X, solver.Lam, solver._pb,
        solver.Minv, solver.preconditioner, solver.Jnew, solver.next_column,
        solver.precond_columns if solver.preconditioner else 0)
    if solver.preconditioner and st == _kernels.OK:
        solver.next_column += solver.precond_columns
        if solver.next_column >= solver.U.size:
            _install_preconditioner(solver, solver.Jnew)
            solver.next_column = 0
    elapsed = time.perf_counter() - start
    _raise_status(st)
    if not np.isfinite(fnorm) or not np.all(np.isfinite(solver.U)):
        raise NonFiniteResidual(f"non-finite residual at t={t_now:.4f}")
    breakdown = bool(res0 > 0.0 and not res1 < res0)
    if breakdown:
        solver.breakdowns += 1
        log.debug("GMRES did not reduce the residual at t=%.4f (%.3e -> %.3e)", t_now, res0, res1)
    u = solver.U[:p.nu]
    return ControllerOutput(
        u=u[:p.n_min].copy(),
        stage_inputs=solver.stage_inputs.copy(),
        residual_norm=float(fnorm),
        solve_time=elapsed,
        u_max=u[p.n_min:].copy() if p.n_min < p.nu else None,
        linear_residual=float(res1),
        krylov_breakdown=breakdown,
    )
