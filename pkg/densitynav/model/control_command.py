from typing import NamedTuple

import numpy as np


class ControlCommand(NamedTuple):
    """Control input: velocity for integrators, force or torque for second-order models."""

    u: np.ndarray
    saturated: bool = False


class UnicycleState(NamedTuple):
    x: float
    y: float
    delta: float


class UnicycleCommand(NamedTuple):
    """Forward speed and turn rate, plus the heading reference they track."""

    v: float
    omega: float
    delta_tilde: float


class SFMParams(NamedTuple):
    """Social-force-model coefficients (unit agent mass)."""

    A: float = 2000.0
    B: float = 0.08
    kappa1: float = 1.2e5
    kappa2: float = 2.4e5
    d_H: float = 2.0
    desired_speed: float = 1.0
    relaxation_time: float = 0.5
    max_repulsion: float = 1e4
    arrival_radius: float = 1.0
