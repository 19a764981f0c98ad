from typing import NamedTuple

from ..trajectories import Trajectory


class BumpShape(NamedTuple):
    """Inverse-bump geometry: occupancy floor theta, obstacle radius r, sensing radius s."""

    theta: float
    r: float
    s: float


class ObstacleSpec(NamedTuple):
    """One moving circular obstacle: bump geometry plus center trajectory."""

    shape: BumpShape
    center: Trajectory
    name: str = ""
