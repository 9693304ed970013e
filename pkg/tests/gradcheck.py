"""Central-difference checks of Hamiltonian and terminal-cost gradients."""

from __future__ import annotations

import numpy as np

from dronerace.objectives import (CostWeights, NMPCProblem, NRHDGProblem, PathFollowingProblem,
                                  PotentialParams)
from dronerace.paths import race_path
from dronerace.quadrotor import DroneParams

from conftest import random_aug_state


def make_problems():
    path, drone, pp = race_path(), DroneParams(), PotentialParams()
    w20 = CostWeights.for_drone(drone, 20.0)
    w40 = CostWeights.for_drone(drone, 40.0)
    return {"pf": PathFollowingProblem(path, drone, w20),
            "nmpc": NMPCProblem(path, drone, w20, pp, 1.0),
            "nrhdg": NRHDGProblem(path, drone, w20, w40, pp)}


def random_point(problem, rng):
    """(x, u, lam) with the opponent close enough for the potential to matter."""
    path = problem.path
    ego = random_aug_state(rng, path)
    if problem.nx == 15:
        x = ego
    elif problem.nx == 19:
        th_op = ego[13] + rng.uniform(-2.0, 2.0)
        x = np.concatenate([ego, path(th_op) + rng.uniform(-0.3, 0.3, 3), [th_op]])
    else:
        opp = random_aug_state(rng, path, (ego[13] - 2.0, ego[13] + 2.0))
        x = np.concatenate([ego, opp])
    u = rng.uniform(0.05, 0.3, problem.nu)
    lam = rng.normal(size=problem.nx)
    return x, u, lam


def hamiltonian(problem, x, u, lam):
    return problem.stage_cost(x, u) + lam @ problem.f(x, u)


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-6))


def check_point(problem, x, u, lam, h=1e-6):
    """Worst relative error of H_x, H_u and phi_x against central differences."""
    hx, hu = problem.hamiltonian_gradients(x, u, lam)
    fx = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fx[i] = (hamiltonian(problem, x + e, u, lam) - hamiltonian(problem, x - e, u, lam)) / (2 * h)
    fu = np.empty_like(u)
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = h
        fu[i] = (hamiltonian(problem, x, u + e, lam) - hamiltonian(problem, x, u - e, lam)) / (2 * h)
    gphi = problem.terminal_gradient(x)
    fphi = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fphi[i] = (problem.terminal_cost(x + e) - problem.terminal_cost(x - e)) / (2 * h)
    return max(relative_error(hx, fx), relative_error(hu, fu), relative_error(gphi, fphi))
