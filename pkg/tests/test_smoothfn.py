import math

import numpy as np
import pytest

from densitynav.model.bump_shape import BumpShape
from densitynav.smoothfn import (
    bump_derivatives,
    bump_dt,
    bump_grad,
    bump_value,
    clearance,
    elementary_f,
    in_sensing_band,
    smooth_step,
    smooth_step_derivatives,
    validate_shape,
)
from densitynav.trajectories import LinearTrajectory, SinusoidalTrajectory


@pytest.mark.parametrize("tau", [-1.0, 0.0, 0.004])
def test_elementary_f_is_zero_at_and_below_floor(tau):
    assert elementary_f(tau) == 0.0


def test_elementary_f_values():
    assert elementary_f(1.0) == pytest.approx(math.exp(-1.0))
    assert elementary_f(0.01) == pytest.approx(math.exp(-100.0), rel=1e-12)
    assert elementary_f(0.01) > 0.0


def test_elementary_f_broadcasts():
    values = elementary_f(np.array([-1.0, 0.5, 2.0]))
    np.testing.assert_allclose(values, [0.0, math.exp(-2.0), math.exp(-0.5)])


@pytest.mark.parametrize("theta", [0.01, 0.05, 0.5])
def test_smooth_step_limits(theta):
    assert smooth_step(-0.3, theta) == theta
    assert smooth_step(0.0, theta) == theta
    assert smooth_step(1.0, theta) == pytest.approx(1.0, abs=1e-15)
    assert smooth_step(2.5, theta) == pytest.approx(1.0, abs=1e-15)
    assert smooth_step(0.5, theta) == pytest.approx(theta + (1.0 - theta) / 2.0)


def test_smooth_step_monotone():
    tau = np.linspace(-0.5, 1.5, 2001)
    values = smooth_step(tau, 0.05)
    assert np.all(np.diff(values) >= -1e-15)
    assert values.min() >= 0.05
    assert values.max() <= 1.0 + 1e-15


def test_smooth_step_derivatives_match_finite_differences():
    tau = np.linspace(0.05, 0.95, 37)
    h = 1e-6
    _, d1, d2 = smooth_step_derivatives(tau, 0.05)
    fd1 = (smooth_step(tau + h, 0.05) - smooth_step(tau - h, 0.05)) / (2 * h)
    _, d1_plus, _ = smooth_step_derivatives(tau + h, 0.05)
    _, d1_minus, _ = smooth_step_derivatives(tau - h, 0.05)
    fd2 = (d1_plus - d1_minus) / (2 * h)
    np.testing.assert_allclose(d1, fd1, rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(d2, fd2, rtol=1e-5, atol=1e-7)


def test_bump_value_regions(make_obstacle_fn):
    obstacle = make_obstacle_fn([1.0, 1.0], r=1.0, s=2.0, theta=0.05)
    assert bump_value(obstacle, 0.0, [1.0, 1.0]) == 0.05
    assert bump_value(obstacle, 0.0, [1.5, 1.0]) == 0.05
    assert bump_value(obstacle, 0.0, [4.0, 1.0]) == pytest.approx(1.0, abs=1e-15)
    inside_band = bump_value(obstacle, 0.0, [2.5, 1.0])
    assert 0.05 < inside_band < 1.0


def test_bump_grad_zero_outside_band(make_obstacle_fn):
    obstacle = make_obstacle_fn([0.0, 0.0])
    np.testing.assert_array_equal(bump_grad(obstacle, 0.0, [[0.2, 0.1], [5.0, 0.0]]), 0.0)


def test_bump_spatial_derivatives_match_finite_differences(make_obstacle_fn, band_points_fn, rng):
    obstacle = make_obstacle_fn(SinusoidalTrajectory([0.5, -1.0], [0.2, 0.1], [0.3, 0.0], 2.0))
    t = 1.3
    points = band_points_fn(obstacle, t, 200, rng)
    h = 1e-6
    evaluation = bump_derivatives(obstacle, t, points)
    for i in range(2):
        step = np.zeros(2)
        step[i] = h
        fd = (bump_value(obstacle, t, points + step) - bump_value(obstacle, t, points - step)) / (2 * h)
        np.testing.assert_allclose(evaluation.grad[:, i], fd, rtol=1e-5, atol=1e-8)
        fd2 = (
            bump_grad(obstacle, t, points + step)[:, i] - bump_grad(obstacle, t, points - step)[:, i]
        ) / (2 * h)
        np.testing.assert_allclose(evaluation.hess_diag[:, i], fd2, rtol=1e-5, atol=1e-6)


def test_bump_time_derivatives_match_finite_differences(make_obstacle_fn, band_points_fn, rng):
    obstacle = make_obstacle_fn(LinearTrajectory([0.0, 0.0], [0.4, -0.3]))
    t = 2.0
    points = band_points_fn(obstacle, t, 100, rng, inset=0.1)
    h = 1e-6
    evaluation = bump_derivatives(obstacle, t, points, with_grad_dt=True)
    fd = (bump_value(obstacle, t + h, points) - bump_value(obstacle, t - h, points)) / (2 * h)
    np.testing.assert_allclose(evaluation.dt, fd, rtol=1e-5, atol=1e-8)
    fd_grad = (bump_grad(obstacle, t + h, points) - bump_grad(obstacle, t - h, points)) / (2 * h)
    np.testing.assert_allclose(evaluation.grad_dt, fd_grad, rtol=1e-5, atol=1e-6)


def test_static_obstacle_has_zero_time_derivative(make_obstacle_fn):
    obstacle = make_obstacle_fn([0.0, 0.0])
    assert bump_dt(obstacle, 3.0, [1.5, 0.0]) == 0.0


def test_clearance_and_band(make_obstacle_fn):
    obstacle = make_obstacle_fn([0.0, 0.0], r=1.0, s=2.0)
    points = np.array([[0.5, 0.0], [1.5, 0.0], [3.0, 0.0]])
    np.testing.assert_allclose(clearance(obstacle, 0.0, points), [-0.5, 0.5, 2.0])
    np.testing.assert_array_equal(in_sensing_band(obstacle, 0.0, points), [False, True, False])


@pytest.mark.parametrize("shape", [BumpShape(1.5, 1.0, 2.0), BumpShape(0.0, 1.0, 2.0), BumpShape(0.05, 2.0, 2.0)])
def test_validate_shape_rejects_bad_geometry(shape):
    with pytest.raises(ValueError):
        validate_shape(shape)
