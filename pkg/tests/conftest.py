import numpy as np
import pytest

from densitynav.density import DensityField, QuadraticDistance
from densitynav.model.bump_shape import BumpShape, ObstacleSpec
from densitynav.model.trajectory_log import RunSummary, TrajectoryLog
from densitynav.trajectories import LinearTrajectory, SinusoidalTrajectory, StaticPoint


def make_obstacle(center, r=1.0, s=2.0, theta=0.05, name="obstacle"):
    if not hasattr(center, "position"):
        center = StaticPoint(center)
    return ObstacleSpec(BumpShape(theta, r, s), center, name)


def band_points(obstacle, t, count, rng, inset=0.05):
    """Random points strictly inside the sensing band of an obstacle at time t."""
    _, r, s = obstacle.shape
    radius = rng.uniform(r + inset, s - inset, count)
    angle = rng.uniform(0.0, 2.0 * np.pi, count)
    offsets = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    return obstacle.center.position(t) + offsets


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def static_obstacles():
    return [
        make_obstacle([3.0, 0.5], name="obstacle1"),
        make_obstacle([6.0, -1.5], name="obstacle2"),
        make_obstacle([7.0, 2.0], name="obstacle3"),
    ]


@pytest.fixture
def moving_obstacles():
    return [
        make_obstacle(LinearTrajectory([2.0, 0.0], [0.0, 0.25]), 0.75, 1.5, name="c1"),
        make_obstacle(LinearTrajectory([4.0, 7.0], [0.0, -0.2]), 0.75, 1.5, name="c2"),
        make_obstacle(
            SinusoidalTrajectory([6.0, -6.0], [0.0, 0.15], [0.1, 0.0], 1.0), 0.75, 1.5, name="c3"
        ),
        make_obstacle(LinearTrajectory([8.0, 5.0], [0.0, -0.12]), 0.75, 1.5, name="c4"),
    ]


@pytest.fixture
def static_field(static_obstacles):
    return DensityField(static_obstacles, QuadraticDistance(StaticPoint([10.0, 0.0])), 0.2, 10.0)


@pytest.fixture
def moving_field(moving_obstacles):
    return DensityField(moving_obstacles, QuadraticDistance(StaticPoint([10.0, 0.0])), 0.2, 10.0)


@pytest.fixture
def make_obstacle_fn():
    return make_obstacle


@pytest.fixture
def band_points_fn():
    return band_points


def make_log(name, clearance_names, clearances, dt=1.0):
    """Hand-built single-integrator log with the given clearance columns."""
    clearances = np.asarray(clearances, dtype=float)
    n = len(clearances)
    return TrajectoryLog(
        agent=name,
        t=dt * np.arange(n, dtype=float),
        states=np.zeros((n, 2)),
        controls=np.zeros((n, 2)),
        rho=np.ones(n),
        psi=np.ones(n),
        clearances=clearances,
        clearance_names=clearance_names,
        saturated=np.zeros(n, dtype=bool),
        state_labels=["x_1", "x_2"],
        control_labels=["u_1", "u_2"],
        events=[],
        summary=RunSummary(True, 0.0, float(clearances.min()), 0.0, 0.0, False, 0.0),
    )


@pytest.fixture
def make_log_fn():
    return make_log
