from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dronerace import _kernels
from dronerace.objectives import CostWeights, PotentialParams
from dronerace.paths import race_path
from dronerace.quadrotor import DroneParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance criteria record their verdicts here; printed at the end of the run
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def _criterion_order(label: str):
    digits = label.rstrip("abcdefghijklmnopqrstuvwxyz")
    return int(digits), label[len(digits):]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS, key=_criterion_order):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>3}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def course():
    return race_path()


@pytest.fixture(scope="session")
def drone():
    return DroneParams()


@pytest.fixture(scope="session")
def kernel_params(course, drone):
    terms, lin = course.kernel_args
    w = CostWeights().as_array()
    return _kernels.pack_race_params(drone.as_array(), w, w, PotentialParams().as_array(), 1.0,
                                     terms, lin)


def random_unit_quaternion(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_aug_state(rng, path, theta_range=(0.0, 20.0), dev=0.3):
    """Augmented state near the path, with its projection parameter nearby."""
    th = rng.uniform(*theta_range)
    p = path(th) + rng.uniform(-dev, dev, 3)
    return np.concatenate([p, rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3),
                           random_unit_quaternion(rng), [th + rng.uniform(-0.05, 0.05)],
                           [rng.uniform(-5, 5)]])
