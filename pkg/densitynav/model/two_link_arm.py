from typing import NamedTuple

import numpy as np

from ..trajectories import Trajectory
from .bump_shape import ObstacleSpec


class TwoLinkArm(NamedTuple):
    """Planar two-link arm with point masses at the link ends; gravity along -y."""

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    g: float = 9.81


class JointDensitySpec(NamedTuple):
    """Configuration-space density: q-space obstacles, joint reference and gains."""

    obstacles: list[ObstacleSpec]
    target: Trajectory
    alpha: float
    beta: float
    kappa: float = 1.0
    feedforward: bool = True


class JointPlan(NamedTuple):
    """Sampled reference q_d(t) with derivatives and the bump product along it."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray
    psi: np.ndarray
