"""Parametric center/target curves with analytic velocities.

Obstacle centers c(t), moving targets x_T(t) and joint references q_T(t) are all
`Trajectory` objects. The built-in families carry exact derivatives; anything
else goes through `FunctionTrajectory`, which differentiates by central
differences in t.
"""

import math
from abc import ABC, abstractmethod
from collections.abc import Callable

import numpy as np

FD_TIME_STEP = 1e-4


class Trajectory(ABC):
    """A time-parameterized point in R^n."""

    kind: str = ""

    @abstractmethod
    def position(self, t: float) -> np.ndarray:
        """Point at time t, shape (n,)."""

    def velocity(self, t: float) -> np.ndarray:
        """Central difference in t; analytic families override this."""
        h = FD_TIME_STEP
        return (self.position(t + h) - self.position(t - h)) / (2 * h)

    def acceleration(self, t: float) -> np.ndarray:
        h = FD_TIME_STEP
        return (self.velocity(t + h) - self.velocity(t - h)) / (2 * h)

    @property
    def is_static(self) -> bool:
        return False

    @property
    def dim(self) -> int:
        return self.position(0.0).shape[0]

    def shifted(self, offset) -> "Trajectory":
        """Same motion translated by a constant offset."""
        return ShiftedTrajectory(self, np.asarray(offset, dtype=float))

    def to_config(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no config form")


class StaticPoint(Trajectory):
    kind = "static"

    def __init__(self, point):
        self.point = np.asarray(point, dtype=float)

    def position(self, t: float) -> np.ndarray:
        return self.point.copy()

    def velocity(self, t: float) -> np.ndarray:
        return np.zeros_like(self.point)

    def acceleration(self, t: float) -> np.ndarray:
        return np.zeros_like(self.point)

    @property
    def is_static(self) -> bool:
        return True

    def to_config(self) -> dict:
        return {"kind": self.kind, "point": self.point.tolist()}


class LinearTrajectory(Trajectory):
    """c(t) = start + velocity * t."""

    kind = "linear"

    def __init__(self, start, velocity):
        self.start = np.asarray(start, dtype=float)
        self.rate = np.asarray(velocity, dtype=float)

    def position(self, t: float) -> np.ndarray:
        return self.start + self.rate * t

    def velocity(self, t: float) -> np.ndarray:
        return self.rate.copy()

    def acceleration(self, t: float) -> np.ndarray:
        return np.zeros_like(self.rate)

    @property
    def is_static(self) -> bool:
        return not np.any(self.rate)

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "start": self.start.tolist(),
            "velocity": self.rate.tolist(),
        }


class SinusoidalTrajectory(Trajectory):
    """Line with a sinusoidal perturbation: start + velocity t + amplitude sin(w t + phase)."""

    kind = "sinusoid"

    def __init__(self, start, velocity, amplitude, frequency: float = 1.0, phase: float = 0.0):
        self.start = np.asarray(start, dtype=float)
        self.rate = np.asarray(velocity, dtype=float)
        self.amplitude = np.asarray(amplitude, dtype=float)
        self.frequency = float(frequency)
        self.phase = float(phase)

    def position(self, t: float) -> np.ndarray:
        return (
            self.start
            + self.rate * t
            + self.amplitude * math.sin(self.frequency * t + self.phase)
        )

    def velocity(self, t: float) -> np.ndarray:
        w = self.frequency
        return self.rate + self.amplitude * w * math.cos(w * t + self.phase)

    def acceleration(self, t: float) -> np.ndarray:
        w = self.frequency
        return -self.amplitude * w * w * math.sin(w * t + self.phase)

    @property
    def is_static(self) -> bool:
        return not np.any(self.rate) and not (np.any(self.amplitude) and self.frequency)

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "start": self.start.tolist(),
            "velocity": self.rate.tolist(),
            "amplitude": self.amplitude.tolist(),
            "frequency": self.frequency,
            "phase": self.phase,
        }


class CircularTrajectory(Trajectory):
    """Planar circle: center + radius (cos(w t + phase), sin(w t + phase))."""

    kind = "circle"

    def __init__(self, center, radius: float, angular_rate: float = 1.0, phase: float = 0.0):
        self.center = np.asarray(center, dtype=float)
        if self.center.shape != (2,):
            raise ValueError("circular trajectories are planar")
        self.radius = float(radius)
        self.angular_rate = float(angular_rate)
        self.phase = float(phase)

    def position(self, t: float) -> np.ndarray:
        a = self.angular_rate * t + self.phase
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def velocity(self, t: float) -> np.ndarray:
        a = self.angular_rate * t + self.phase
        w = self.angular_rate
        return self.radius * w * np.array([-math.sin(a), math.cos(a)])

    def acceleration(self, t: float) -> np.ndarray:
        a = self.angular_rate * t + self.phase
        w = self.angular_rate
        return -self.radius * w * w * np.array([math.cos(a), math.sin(a)])

    @property
    def is_static(self) -> bool:
        return self.radius == 0.0 or self.angular_rate == 0.0

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "center": self.center.tolist(),
            "radius": self.radius,
            "angular_rate": self.angular_rate,
            "phase": self.phase,
        }


class FunctionTrajectory(Trajectory):
    """Arbitrary curve given as a callable; derivatives by central differences."""

    kind = "function"

    def __init__(self, fn: Callable[[float], np.ndarray], static: bool = False):
        self._fn = fn
        self._static = static

    def position(self, t: float) -> np.ndarray:
        return np.asarray(self._fn(t), dtype=float)

    @property
    def is_static(self) -> bool:
        return self._static


class ShiftedTrajectory(Trajectory):
    def __init__(self, base: Trajectory, offset: np.ndarray):
        self.base = base
        self.offset = offset

    def position(self, t: float) -> np.ndarray:
        return self.base.position(t) + self.offset

    def velocity(self, t: float) -> np.ndarray:
        return self.base.velocity(t)

    def acceleration(self, t: float) -> np.ndarray:
        return self.base.acceleration(t)

    @property
    def is_static(self) -> bool:
        return self.base.is_static

    def to_config(self) -> dict:
        config = self.base.to_config()
        for key in ("point", "start", "center"):
            if key in config:
                config[key] = (np.asarray(config[key]) + self.offset).tolist()
        return config


def snapshot(position, velocity, t: float) -> LinearTrajectory:
    """Constant-velocity curve passing through `position` at time t.

    Used to present another agent as a moving obstacle: exact position and
    velocity at the evaluation instant.
    """
    position = np.asarray(position, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    return LinearTrajectory(position - velocity * t, velocity)


TRAJECTORY_KINDS = {
    StaticPoint.kind: StaticPoint,
    LinearTrajectory.kind: LinearTrajectory,
    SinusoidalTrajectory.kind: SinusoidalTrajectory,
    CircularTrajectory.kind: CircularTrajectory,
}


def trajectory_from_config(config) -> Trajectory:
    """Build a trajectory from its config mapping (or a bare point)."""
    if isinstance(config, (list, tuple)):
        return StaticPoint(config)
    if not isinstance(config, dict) or "kind" not in config:
        raise ValueError("trajectory must be a point or a mapping with a 'kind'")
    params = dict(config)
    kind = params.pop("kind")
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(
            f"unknown trajectory kind '{kind}' (expected one of {sorted(TRAJECTORY_KINDS)})"
        )
    try:
        return TRAJECTORY_KINDS[kind](**params)
    except TypeError as e:
        raise ValueError(f"bad parameters for '{kind}' trajectory: {e}") from e
