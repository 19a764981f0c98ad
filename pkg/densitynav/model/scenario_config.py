from typing import Any, NamedTuple

from .control_command import SFMParams

# trajectory configs stay in their YAML form: a bare point [x, y] or {kind: ..., ...}
type TrajectoryConfig = list[float] | dict[str, Any]


class WorkspaceConfig(NamedTuple):
    lower: list[float]
    upper: list[float]


class DensityConfig(NamedTuple):
    """Field parameters shared by every agent unless an agent overrides them."""

    alpha: float
    beta: float
    theta: float
    kappa: float
    delta: float
    reciprocal_distance: bool
    inflate_exclusion: bool


class ObstacleConfig(NamedTuple):
    name: str
    r: float
    s: float
    center: TrajectoryConfig
    theta: float | None = None


class AgentConfig(NamedTuple):
    name: str
    radius: float
    sensing_radius: float
    start: list[float]
    target: TrajectoryConfig
    heading: float = 0.0
    alpha: float | None = None
    beta: float | None = None
    theta: float | None = None
    kappa: float | None = None


class InitialSetConfig(NamedTuple):
    """Ball of initial conditions used by the sampling commands."""

    center: list[float]
    radius: float


class ControlConfig(NamedTuple):
    u_max: float | None
    K: float
    feedforward: bool


class IntegrationConfig(NamedTuple):
    dt: float
    horizon: float
    log_step: float


class MonitorConfig(NamedTuple):
    convergence_radius: float
    hold_time: float


class CertifyConfig(NamedTuple):
    grid_points: int
    time_samples: int
    rays: int
    exclude_local_ball: bool
    liouville_samples: int
    liouville_dt: float
    liouville_t0: float
    liouville_t1: float
    liouville_set: InitialSetConfig | None


class OccupancyConfig(NamedTuple):
    samples: int
    cells: int


class TaskObstacleConfig(NamedTuple):
    center: list[float]
    radius: float


class ArmConfig(NamedTuple):
    """Two-link arm pipeline: model, task-space target and obstacles, tracking gains."""

    m1: float
    m2: float
    l1: float
    l2: float
    g: float
    task_target: TrajectoryConfig
    obstacles: list[TaskObstacleConfig]
    elbow: int
    grid_resolution: int
    sensing_margin: float
    Kp: float
    Kv: float


class ScenarioConfig(NamedTuple):
    """Declarative scenario: environment, robot, controller and run settings."""

    name: str
    robot: str
    controller: str
    seed: int
    workspace: WorkspaceConfig
    density: DensityConfig
    control: ControlConfig
    integration: IntegrationConfig
    monitors: MonitorConfig
    certify: CertifyConfig
    occupancy: OccupancyConfig
    sfm: SFMParams
    obstacles: list[ObstacleConfig]
    agents: list[AgentConfig]
    initial_set: InitialSetConfig | None = None
    arm: ArmConfig | None = None

    @property
    def is_multiagent(self) -> bool:
        return len(self.agents) > 1
