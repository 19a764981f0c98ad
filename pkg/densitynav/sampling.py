"""Monte-Carlo occupancy of a region and sampled almost-everywhere convergence."""

import logging
import math
from collections.abc import Sequence
from typing import NamedTuple, Protocol

import numpy as np

from .model.bump_shape import ObstacleSpec
from .scenario import Scenario, ball_volume
from .sim import simulate, simulate_batch, supports_batch
from .smoothfn import clearance
from .worker_pool import WorkerPool

logger = logging.getLogger(__name__)

DEFAULT_GRID_CELLS = 100
MAX_REJECTION_ROUNDS = 1000


class Region(Protocol):
    def contains(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Indicator over a batch of times and points."""


class UnsafeRegion:
    """Union of the obstacles' unsafe discs at their current positions."""

    def __init__(self, obstacles: Sequence[ObstacleSpec]):
        self.obstacles = list(obstacles)

    def contains(self, t, x):
        x = np.asarray(x, dtype=float)
        times, index = np.unique(np.asarray(t, dtype=float), return_inverse=True)
        inside = np.zeros(len(x), dtype=bool)
        for obstacle in self.obstacles:
            centers = np.array([obstacle.center.position(ti) for ti in times])
            inside |= np.linalg.norm(x - centers[index], axis=-1) < obstacle.shape.r
        return inside


class BallRegion:
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = radius

    def contains(self, t, x):
        return np.linalg.norm(np.asarray(x) - self.center, axis=-1) <= self.radius


class OccupancyEstimate(NamedTuple):
    """Occupancy of a region: volume(X_0) times the mean time spent inside it."""

    value: float
    standard_error: float
    grid: np.ndarray
    grid_edges: tuple[np.ndarray, np.ndarray]
    samples: int
    volume: float


class ConvergenceSample(NamedTuple):
    fraction: float
    failures: list[np.ndarray]
    samples: int


def initial_set_volume(scenario: Scenario) -> float:
    """Lebesgue volume of X_0; a single start point counts as unit mass."""
    if scenario.initial_set is None:
        return 1.0
    return ball_volume(scenario.dim, scenario.initial_set[1])


def sample_initial_conditions(
    scenario: Scenario, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform samples from the initial ball, rejecting points inside unsafe sets at t=0."""
    if count < 1:
        raise ValueError(f"need at least one sample, got {count}")
    if scenario.initial_set is None:
        return np.repeat(scenario.starts[:1], count, axis=0)
    center, radius = scenario.initial_set
    n = scenario.dim
    accepted: list[np.ndarray] = []
    for _ in range(MAX_REJECTION_ROUNDS):
        direction = rng.normal(size=(count, n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        points = center + direction * radius * rng.random((count, 1)) ** (1.0 / n)
        for point in points:
            if all(clearance(o, 0.0, point) > 0.0 for o in scenario.obstacles):
                accepted.append(point)
        if len(accepted) >= count:
            return np.array(accepted[:count])
    raise ValueError("initial set lies inside the unsafe sets")


def _single_agent(scenario: Scenario) -> None:
    if scenario.is_multiagent:
        raise ValueError("sampling runs are defined for single-agent scenarios")


def _occupancy_paths(
    scenario: Scenario, starts: np.ndarray, pool: WorkerPool
) -> tuple[np.ndarray, np.ndarray]:
    """Times and positions, shape (steps, samples, n), of every run without the final step."""
    n = scenario.dim
    if supports_batch(scenario):
        run = simulate_batch(scenario, starts, early_stop=False)
        return run.t[:-1], run.states[:-1, :, :n]

    def run_one(start):
        (log,) = simulate(scenario.with_starts(start), early_stop=False)
        return log

    logs = pool.map(run_one, starts)
    return logs[0].t[:-1], np.stack([log.states[:-1, :n] for log in logs], axis=1)


def estimate_occupancy(
    scenario: Scenario,
    region: Region,
    samples: int,
    horizon: float | None = None,
    seed: int | None = None,
    cells: int = DEFAULT_GRID_CELLS,
    pool: WorkerPool | None = None,
) -> OccupancyEstimate:
    """Monte-Carlo estimate of the occupancy measure of `region` over [0, horizon].

    Single-integrator gradient scenarios integrate all samples as one array;
    other robots fall back to one simulation per sample on the worker pool.
    """
    _single_agent(scenario)
    if horizon is not None:
        scenario = scenario._replace(horizon=horizon)
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    starts = sample_initial_conditions(scenario, samples, rng)
    t, x = _occupancy_paths(scenario, starts, pool or WorkerPool())
    steps, count, n = x.shape
    points = x.reshape(-1, n)
    inside = region.contains(np.repeat(t, count), points).reshape(steps, count)
    per_sample = scenario.dt * np.count_nonzero(inside, axis=0).astype(float)

    volume = initial_set_volume(scenario)
    edges = (
        np.linspace(scenario.lower[0], scenario.upper[0], cells + 1),
        np.linspace(scenario.lower[1], scenario.upper[1], cells + 1),
    )
    counts, _, _ = np.histogram2d(points[:, 1], points[:, 0], bins=(edges[1], edges[0]))
    grid = counts * scenario.dt * volume / count
    value = volume * float(per_sample.mean())
    error = 0.0
    if count > 1:
        error = volume * float(per_sample.std(ddof=1)) / math.sqrt(count)
    logger.info("occupancy %.6g (standard error %.3g) from %d samples", value, error, count)
    return OccupancyEstimate(value, error, grid, edges, count, volume)


def ae_convergence_sample(
    scenario: Scenario,
    samples: int,
    seed: int | None = None,
    pool: WorkerPool | None = None,
) -> ConvergenceSample:
    """Fraction of sampled initial conditions whose run converges; failures are kept."""
    _single_agent(scenario)
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    starts = sample_initial_conditions(scenario, samples, rng)
    if supports_batch(scenario):
        outcomes = simulate_batch(scenario, starts).converged.tolist()
    else:

        def converged(start) -> bool:
            (log,) = simulate(scenario.with_starts(start))
            return log.summary.converged

        outcomes = (pool or WorkerPool()).map(converged, starts)
    failures = [start for start, ok in zip(starts, outcomes) if not ok]
    for start in failures:
        logger.warning("no convergence from initial condition %s", start)
    fraction = 1.0 - len(failures) / len(starts)
    return ConvergenceSample(fraction, failures, len(starts))
