"""Runtime scenario objects built from a validated `ScenarioConfig`."""

import logging
import math
from typing import NamedTuple

import numpy as np

from .density import DensityField, QuadraticDistance
from .model.agent_spec import AgentSpec
from .model.bump_shape import BumpShape, ObstacleSpec
from .model.control_command import SFMParams
from .model.robot_kind import DOUBLE_INTEGRATOR, UNICYCLE
from .model.scenario_config import ScenarioConfig
from .model.two_link_arm import TwoLinkArm
from .trajectories import Trajectory, trajectory_from_config

logger = logging.getLogger(__name__)


class Scenario(NamedTuple):
    """Everything the simulator needs; immutable once built."""

    name: str
    robot: str
    controller: str
    lower: np.ndarray
    upper: np.ndarray
    obstacles: list[ObstacleSpec]
    agents: list[AgentSpec]
    starts: np.ndarray
    headings: np.ndarray
    field: DensityField | None
    u_max: float | None
    K: float
    sfm: SFMParams
    dt: float
    horizon: float
    log_step: float
    convergence_radius: float
    hold_time: float
    delta: float
    reciprocal_distance: bool
    inflate_exclusion: bool
    initial_set: tuple[np.ndarray, float] | None
    seed: int

    @property
    def dim(self) -> int:
        return self.starts.shape[1]

    @property
    def is_multiagent(self) -> bool:
        return len(self.agents) > 1

    @property
    def state_dim(self) -> int:
        if self.robot == DOUBLE_INTEGRATOR:
            return 2 * self.dim
        if self.robot == UNICYCLE:
            return 3
        return self.dim

    def with_starts(self, starts) -> "Scenario":
        return self._replace(starts=np.atleast_2d(np.asarray(starts, dtype=float)))

    def initial_state(self) -> np.ndarray:
        """Joint state, one row per agent."""
        n = len(self.agents)
        if self.robot == DOUBLE_INTEGRATOR:
            return np.hstack([self.starts, np.zeros((n, self.dim))])
        if self.robot == UNICYCLE:
            return np.hstack([self.starts, self.headings[:, None]])
        return self.starts.copy()


class ArmScenario(NamedTuple):
    model: TwoLinkArm
    task_target: Trajectory
    task_obstacles: list[tuple[np.ndarray, float]]
    elbow: int
    grid_resolution: int
    sensing_margin: float
    alpha: float
    beta: float
    theta: float
    kappa: float
    feedforward: bool
    Kp: float
    Kv: float
    dt: float
    horizon: float
    log_step: float


def _obstacles(config: ScenarioConfig) -> list[ObstacleSpec]:
    obstacles = []
    for index, obstacle in enumerate(config.obstacles):
        theta = config.density.theta if obstacle.theta is None else obstacle.theta
        obstacles.append(
            ObstacleSpec(
                shape=BumpShape(theta, obstacle.r, obstacle.s),
                center=trajectory_from_config(obstacle.center),
                name=obstacle.name or f"obstacle{index + 1}",
            )
        )
    return obstacles


def _agents(config: ScenarioConfig) -> list[AgentSpec]:
    density = config.density
    agents = []
    for agent in config.agents:
        agents.append(
            AgentSpec(
                name=agent.name,
                radius=agent.radius,
                sensing_radius=agent.sensing_radius,
                target=trajectory_from_config(agent.target),
                alpha=density.alpha if agent.alpha is None else agent.alpha,
                beta=density.beta if agent.beta is None else agent.beta,
                theta=density.theta if agent.theta is None else agent.theta,
                kappa=density.kappa if agent.kappa is None else agent.kappa,
            )
        )
    return agents


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Turn trajectory configs into curves and assemble the single-agent field.

    Raises ValueError when the combination of moving parts has no density
    construction (moving target and moving obstacles together).
    """
    obstacles = _obstacles(config)
    agents = _agents(config)
    field = None
    if len(agents) == 1:
        agent = agents[0]
        field = DensityField(
            obstacles,
            QuadraticDistance(agent.target, agent.kappa),
            agent.alpha,
            agent.beta,
        )
        logger.debug("single-agent field in %s mode", field.mode.value)
    elif any(not agent.target.is_static for agent in agents):
        raise ValueError("multi-agent scenarios need static agent targets")

    initial_set = None
    if config.initial_set is not None:
        initial_set = (np.asarray(config.initial_set.center, dtype=float), config.initial_set.radius)

    return Scenario(
        name=config.name,
        robot=config.robot,
        controller=config.controller,
        lower=np.asarray(config.workspace.lower, dtype=float),
        upper=np.asarray(config.workspace.upper, dtype=float),
        obstacles=obstacles,
        agents=agents,
        starts=np.array([agent.start for agent in config.agents], dtype=float),
        headings=np.array([agent.heading for agent in config.agents], dtype=float),
        field=field,
        u_max=config.control.u_max,
        K=config.control.K,
        sfm=config.sfm,
        dt=config.integration.dt,
        horizon=config.integration.horizon,
        log_step=config.integration.log_step,
        convergence_radius=config.monitors.convergence_radius,
        hold_time=config.monitors.hold_time,
        delta=config.density.delta,
        reciprocal_distance=config.density.reciprocal_distance,
        inflate_exclusion=config.density.inflate_exclusion,
        initial_set=initial_set,
        seed=config.seed,
    )


def build_arm_scenario(config: ScenarioConfig) -> ArmScenario:
    if config.arm is None:
        raise ValueError(f"scenario '{config.name}' has no 'arm' section")
    arm = config.arm
    density = config.density
    return ArmScenario(
        model=TwoLinkArm(arm.m1, arm.m2, arm.l1, arm.l2, arm.g),
        task_target=trajectory_from_config(arm.task_target),
        task_obstacles=[(np.asarray(o.center, dtype=float), o.radius) for o in arm.obstacles],
        elbow=arm.elbow,
        grid_resolution=arm.grid_resolution,
        sensing_margin=arm.sensing_margin,
        alpha=density.alpha,
        beta=density.beta,
        theta=density.theta,
        kappa=density.kappa,
        feedforward=config.control.feedforward,
        Kp=arm.Kp,
        Kv=arm.Kv,
        dt=config.integration.dt,
        horizon=config.integration.horizon,
        log_step=config.integration.log_step,
    )


def ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius**dim
