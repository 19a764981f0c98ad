from typing import NamedTuple

import numpy as np


class RunSummary(NamedTuple):
    """Per-agent outcome of one closed-loop run."""

    converged: bool
    time_to_converge: float | None
    min_clearance: float
    control_total_variation: float
    heading_total_variation: float
    left_workspace: bool
    max_control: float


class TrajectoryLog(NamedTuple):
    """Full-resolution record of one agent; exporters decimate it.

    Arrays share the leading time axis. `clearances[:, k]` is the distance to the
    boundary of the k-th unsafe set named `clearance_names[k]`.
    """

    agent: str
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    rho: np.ndarray
    psi: np.ndarray
    clearances: np.ndarray
    clearance_names: list[str]
    saturated: np.ndarray
    state_labels: list[str]
    control_labels: list[str]
    events: list[str]
    summary: RunSummary

    @property
    def is_safe(self) -> bool:
        return self.summary.min_clearance > 0.0
