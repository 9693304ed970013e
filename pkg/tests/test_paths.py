from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dronerace import _kernels
from dronerace.errors import NoProjectionFound, SingularProjection
from dronerace.paths import (SinusoidPath, augmented_derivative, circle_path, helix_path,
                             line_path, projection_curvature, projection_rate, race_path,
                             signed_arc_length, singularity_margin, solve_initial_projection,
                             stationarity_residual)
from dronerace.quadrotor import DroneParams, DroneState

thetas = st.floats(-2.0, 60.0, allow_nan=False)


@given(thetas)
def test_race_path_formula(th):
    r = race_path()(th)
    np.testing.assert_allclose(r, [6 * np.sin(th), 3 * np.sin(2 * th), 6 * np.sin(th / 2)],
                               atol=1e-12)


@given(thetas)
def test_derivatives_match_central_differences(th):
    path = race_path()
    h = 1e-5
    d = path.derivatives(th, 3)
    for order in range(3):
        fd = (path.derivatives(th + h, order)[order] - path.derivatives(th - h, order)[order]) / (2 * h)
        np.testing.assert_allclose(fd, d[order + 1], atol=1e-7)


@given(thetas)
def test_compiled_path_matches_reference(th):
    path = race_path()
    terms, lin = path.kernel_args
    P = _kernels.pack_race_params(np.ones(7), np.ones(9), np.ones(9), np.ones(5), 1.0, terms, lin)
    pb = np.zeros((4, 3))
    _kernels.path_eval(P, th, pb, 0)
    np.testing.assert_allclose(pb, np.array(path.derivatives(th, 3)), atol=1e-12)


def test_position_grid_matches_pointwise():
    path = race_path()
    g = np.linspace(-2, 60, 37)
    np.testing.assert_allclose(path.position_grid(g), [path(t) for t in g], atol=1e-12)


def test_range_validation():
    with pytest.raises(ValueError):
        SinusoidPath(theta_min=1.0, theta_max=0.0)
    with pytest.raises(ValueError):
        SinusoidPath(np.array([[3, 1.0, 1.0, 0.0]]))


def test_config_round_trip():
    path = helix_path(2.0, 0.5, theta_min=-1.0, theta_max=9.0)
    back = SinusoidPath.from_config(path.to_config())
    for th in np.linspace(-1, 9, 11):
        np.testing.assert_allclose(back(th), path(th), atol=1e-14)
    assert (back.theta_min, back.theta_max) == (-1.0, 9.0)


def test_line_projection_is_foot_of_perpendicular():
    path = line_path()
    assert solve_initial_projection(path, [3.0, 1.0, 0.0], hint=0.0) == pytest.approx(3.0)


def test_circle_projection_hint_branch():
    path = circle_path(2.0, theta_min=-np.pi, theta_max=np.pi)
    th = solve_initial_projection(path, [0.0, 3.0, 0.0])
    assert th == pytest.approx(np.pi / 2, abs=1e-8)


def test_unbounded_path_without_hint_raises():
    with pytest.raises(NoProjectionFound):
        solve_initial_projection(line_path(), [0.0, 0.0, 0.0])


def test_circle_centre_is_singular():
    path = circle_path(1.5)
    with pytest.raises(SingularProjection):
        projection_rate(path, 0.3, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    assert singularity_margin(path, 0.3, [0.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)


def test_projection_rate_on_line_is_speed_over_slope():
    path = line_path(direction=(2.0, 0.0, 0.0))
    assert projection_rate(path, 0.0, [0.0, 1.0, 0.0], [4.0, 0.5, 0.0]) == pytest.approx(2.0)


def test_arc_length_circle_and_sign():
    path = circle_path(2.0)
    assert signed_arc_length(path, 0.0, np.pi) == pytest.approx(2 * np.pi, rel=1e-10)
    assert signed_arc_length(path, np.pi, 0.0) == pytest.approx(-2 * np.pi, rel=1e-10)
    assert signed_arc_length(path, 1.0, 1.0) == 0.0


def test_sigma_rate_on_straight_line():
    path = line_path()
    x = np.concatenate([np.asarray(DroneState.hover_at([0.0, 0.2, 0.0])), [0.0, 0.0]])
    x[3:6] = [1.5, 0.0, 0.0]
    d = augmented_derivative(x, np.full(4, DroneParams().hover_thrust), path)
    assert d[13] == pytest.approx(1.5)
    assert d[14] == pytest.approx(1.5)


@given(thetas, st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_solved_projection_is_stationary(th, a, b):
    path = race_path()
    _, dr, _ = path.derivatives(th, 2)
    # offset orthogonal to the tangent keeps th the projection
    n1 = np.cross(dr, [0.0, 0.0, 1.0])
    n1 /= np.linalg.norm(n1)
    n2 = np.cross(dr, n1)
    n2 /= np.linalg.norm(n2)
    p = path(th) + a * n1 + b * n2
    if projection_curvature(path, th, p) <= 0:
        return
    found = solve_initial_projection(path, p, hint=th)
    assert abs(stationarity_residual(path, found, p)) < 1e-8
    assert projection_curvature(path, found, p) > 0


def test_compiled_projection_agrees():
    path = race_path()
    terms, lin = path.kernel_args
    P = _kernels.pack_race_params(np.ones(7), np.ones(9), np.ones(9), np.ones(5), 1.0, terms, lin)
    rng = np.random.default_rng(4)
    for _ in range(50):
        th = rng.uniform(0, 50)
        p = path(th) + rng.uniform(-0.2, 0.2, 3)
        ref = solve_initial_projection(path, p, hint=th)
        got = _kernels.project(P, p, th, -2.0, 60.0, 1e-12, 50, np.zeros((4, 3)))
        assert got == pytest.approx(ref, abs=1e-8)
