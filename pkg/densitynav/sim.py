"""Fixed-step RK4 closed-loop simulation with safety and convergence monitors."""

import logging
import math
from collections.abc import Callable, Sequence
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .control import (
    HeadingReference,
    Neighbor,
    arm_inverse_dynamics,
    backstepping_control,
    gradient_control,
    saturate,
    sfm_control,
)
from .density import DensityField, multiagent_field
from .model.bump_shape import ObstacleSpec
from .model.control_command import ControlCommand, UnicycleState
from .model.robot_kind import (
    BACKSTEPPING,
    DOUBLE_INTEGRATOR,
    GRADIENT,
    SFM,
    SINGLE_INTEGRATOR,
    UNICYCLE,
)
from .model.trajectory_log import RunSummary, TrajectoryLog
from .model.two_link_arm import JointDensitySpec, JointPlan, TwoLinkArm
from .robots import (
    JointTargetTrajectory,
    arm_dynamics,
    arm_fk,
    arm_ik,
    collision_mask,
    joint_motion_plan,
    joint_obstacle_coverage,
    joint_obstacle_specs,
    link_clearance,
    workspace_to_joint_obstacles,
)
from .scenario import ArmScenario, Scenario
from .smoothfn import clearance
from .utils import heading_total_variation, headings_from_velocities, total_variation

logger = logging.getLogger(__name__)

DEGENERATE_PEAK = 1e-12


class SimulationDivergedError(RuntimeError):
    """State became NaN or infinite."""

    def __init__(self, step: int, t: float):
        super().__init__(f"state became non-finite at step {step} (t={t:.3f} s)")
        self.step = step
        self.t = t


def agent_field(
    scenario: Scenario, j: int, t: float, positions, velocities=None
) -> DensityField:
    """Density seen by agent j; other agents enter as constant-velocity obstacles."""
    if not scenario.is_multiagent:
        return scenario.field
    return multiagent_field(
        scenario.agents,
        j,
        t,
        positions,
        velocities,
        environment=scenario.obstacles,
        inflate=scenario.inflate_exclusion,
        reciprocal_distance=scenario.reciprocal_distance,
    )


def _split(scenario: Scenario, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = scenario.dim
    positions = state[:, :n]
    if scenario.robot == DOUBLE_INTEGRATOR:
        return positions, state[:, n : 2 * n]
    return positions, np.zeros_like(positions)


def multiagent_step(
    scenario: Scenario,
    t: float,
    state: np.ndarray,
    heading_refs: Sequence[HeadingReference] | None = None,
) -> list[ControlCommand]:
    """Controls of every agent from one snapshot of the joint state."""
    positions, velocities = _split(scenario, state)
    commands = []
    for j, agent in enumerate(scenario.agents):
        x, v = positions[j], velocities[j]
        if scenario.controller == SFM:
            neighbors = [
                Neighbor(positions[k], velocities[k], other.radius)
                for k, other in enumerate(scenario.agents)
                if k != j
            ]
            command = sfm_control(
                x, v, agent.radius, neighbors, scenario.sfm, agent.target.position(t)
            )
        else:
            field = agent_field(scenario, j, t, positions, velocities)
            if scenario.controller == BACKSTEPPING:
                command = backstepping_control(field, t, x, v, scenario.K)
            else:
                command = gradient_control(field, t, x)
        if scenario.u_max is not None:
            command = saturate(command, scenario.u_max)
        if scenario.robot == UNICYCLE:
            if heading_refs is None:
                raise ValueError("unicycle agents need heading references")
            unicycle = heading_refs[j].command(
                UnicycleState(*state[j]), command.u, scenario.dt
            )
            command = ControlCommand(
                u=np.array([unicycle.v, unicycle.omega]), saturated=command.saturated
            )
        commands.append(command)
    return commands


def state_derivative(robot: str, state: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """Joint-state derivative; `controls` holds one row per agent."""
    if robot == DOUBLE_INTEGRATOR:
        n = controls.shape[1]
        return np.hstack([state[:, n:], controls])
    if robot == UNICYCLE:
        v, omega = controls[:, 0], controls[:, 1]
        delta = state[:, 2]
        return np.stack([v * np.cos(delta), v * np.sin(delta), omega], axis=1)
    return controls.copy()


class _ConvergenceMonitor:
    def __init__(self, radius: float, hold_time: float):
        self.radius = radius
        self.hold_time = hold_time
        self.entered: float | None = None
        self.converged_at: float | None = None

    def update(self, t: float, distance: float) -> None:
        if distance <= self.radius:
            if self.entered is None:
                self.entered = t
            if t - self.entered >= self.hold_time - 1e-9:
                self.converged_at = self.entered
        else:
            self.entered = None
            self.converged_at = None

    @property
    def converged(self) -> bool:
        return self.converged_at is not None


class Simulator:
    """Integrates one scenario; one `TrajectoryLog` per agent."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.hold_controls = scenario.u_max is not None or scenario.robot == UNICYCLE

    def run(self, early_stop: bool = True) -> list[TrajectoryLog]:
        scenario = self.scenario
        dt = scenario.dt
        steps = int(round(scenario.horizon / dt))
        agents = scenario.agents
        heading_refs = [HeadingReference(scenario.K) for _ in agents]
        monitors = [
            _ConvergenceMonitor(scenario.convergence_radius, scenario.hold_time)
            for _ in agents
        ]
        left_workspace = [False] * len(agents)
        events: list[list[str]] = [[] for _ in agents]
        rows: list[list[tuple]] = [[] for _ in agents]

        state = scenario.initial_state()
        t = 0.0
        logger.info(
            "simulating '%s': %d agent(s), %s/%s, dt=%s, horizon=%s",
            scenario.name,
            len(agents),
            scenario.robot,
            scenario.controller,
            dt,
            scenario.horizon,
        )
        for step in range(steps + 1):
            t = step * dt
            commands = multiagent_step(scenario, t, state, heading_refs)
            self._record(t, state, commands, rows, monitors)
            self._check_workspace(t, state, left_workspace, events)
            if step == steps or (early_stop and all(m.converged for m in monitors)):
                break
            state = self._advance(t, state, commands)
            if not np.all(np.isfinite(state)):
                raise SimulationDivergedError(step + 1, t + dt)

        logs = [
            self._build_log(j, rows[j], monitors[j], left_workspace[j], events[j])
            for j in range(len(agents))
        ]
        for log in logs:
            logger.info(
                "agent '%s': converged=%s min clearance=%.4f",
                log.agent,
                log.summary.converged,
                log.summary.min_clearance,
            )
        return logs

    def _advance(self, t: float, state: np.ndarray, commands: list[ControlCommand]) -> np.ndarray:
        scenario = self.scenario
        dt = scenario.dt
        held = np.array([c.u for c in commands])

        def derivative(tau, s, first=False):
            if self.hold_controls or first:
                controls = held
            else:
                controls = np.array([c.u for c in multiagent_step(scenario, tau, s)])
            return state_derivative(scenario.robot, s, controls)

        k1 = derivative(t, state, first=True)
        k2 = derivative(t + dt / 2, state + dt / 2 * k1)
        k3 = derivative(t + dt / 2, state + dt / 2 * k2)
        k4 = derivative(t + dt, state + dt * k3)
        return state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def _record(self, t, state, commands, rows, monitors) -> None:
        scenario = self.scenario
        positions, velocities = _split(scenario, state)
        for j, agent in enumerate(scenario.agents):
            x = positions[j]
            field = agent_field(scenario, j, t, positions, velocities)
            psi = float(field.psi(t, x).value)
            rho = float(field.rho(t, x))
            clearances = [
                float(clearance(obstacle, t, x)) - agent.radius
                for obstacle in scenario.obstacles
            ]
            clearances += [
                float(np.linalg.norm(x - positions[k])) - agent.radius - other.radius
                for k, other in enumerate(scenario.agents)
                if k != j
            ]
            rows[j].append(
                (t, state[j].copy(), commands[j].u.copy(), rho, psi, clearances, commands[j].saturated)
            )
            monitors[j].update(t, float(np.linalg.norm(x - agent.target.position(t))))

    def _check_workspace(self, t, state, left_workspace, events) -> None:
        positions, _ = _split(self.scenario, state)
        for j, x in enumerate(positions):
            outside = np.any(x < self.scenario.lower) or np.any(x > self.scenario.upper)
            if outside and not left_workspace[j]:
                left_workspace[j] = True
                events[j].append(f"left workspace at t={t:.2f}")
                logger.warning("agent '%s' left the workspace at t=%.2f", self.scenario.agents[j].name, t)

    def _build_log(self, j, rows, monitor, left_workspace, events) -> TrajectoryLog:
        scenario = self.scenario
        agent = scenario.agents[j]
        t = np.array([row[0] for row in rows])
        states = np.array([row[1] for row in rows])
        controls = np.array([row[2] for row in rows])
        clearances = np.array([row[5] for row in rows]).reshape(len(rows), -1)
        names = [o.name for o in scenario.obstacles] + [
            other.name for k, other in enumerate(scenario.agents) if k != j
        ]
        n = scenario.dim
        if scenario.robot == UNICYCLE:
            headings = states[:, 2]
            state_labels = ["x", "y", "heading"]
            control_labels = ["v", "omega"]
        else:
            velocities = states[:, n:] if scenario.robot == DOUBLE_INTEGRATOR else controls
            headings = headings_from_velocities(velocities) if n == 2 else np.zeros(len(t))
            state_labels = [f"x_{i + 1}" for i in range(n)]
            if scenario.robot == DOUBLE_INTEGRATOR:
                state_labels += [f"v_{i + 1}" for i in range(n)]
            control_labels = [f"u_{i + 1}" for i in range(controls.shape[1])]
        summary = RunSummary(
            converged=monitor.converged,
            time_to_converge=monitor.converged_at,
            min_clearance=float(clearances.min()) if clearances.size else math.inf,
            control_total_variation=total_variation(controls),
            heading_total_variation=heading_total_variation(headings),
            left_workspace=left_workspace,
            max_control=float(np.max(np.abs(controls))) if controls.size else 0.0,
        )
        return TrajectoryLog(
            agent=agent.name,
            t=t,
            states=states,
            controls=controls,
            rho=np.array([row[3] for row in rows]),
            psi=np.array([row[4] for row in rows]),
            clearances=clearances,
            clearance_names=names,
            saturated=np.array([row[6] for row in rows], dtype=bool),
            state_labels=state_labels,
            control_labels=control_labels,
            events=events,
            summary=summary,
        )


def simulate(scenario: Scenario, early_stop: bool = True) -> list[TrajectoryLog]:
    return Simulator(scenario).run(early_stop=early_stop)


class BatchRun(NamedTuple):
    """Runs of one single-agent scenario from many starts, integrated as one array.

    `states` has shape (steps, starts, n); `converged_at` is NaN for runs that
    did not converge.
    """

    t: np.ndarray
    states: np.ndarray
    converged_at: np.ndarray

    @property
    def converged(self) -> np.ndarray:
        return ~np.isnan(self.converged_at)


def supports_batch(scenario: Scenario) -> bool:
    """Whether every start can share one vectorized field evaluation per stage."""
    return (
        not scenario.is_multiagent
        and scenario.robot == SINGLE_INTEGRATOR
        and scenario.controller == GRADIENT
    )


def simulate_batch(scenario: Scenario, starts, early_stop: bool = True) -> BatchRun:
    """Integrate every start at once with the step, saturation and hold rules of `Simulator`.

    With `early_stop` a run is frozen as converged the first time it has held
    the convergence radius for `hold_time`; the batch ends once all are frozen.
    """
    if not supports_batch(scenario):
        raise ValueError("batched runs need a single-agent single-integrator gradient scenario")
    field = scenario.field
    target = scenario.agents[0].target
    dt = scenario.dt
    steps = int(round(scenario.horizon / dt))
    x = np.array(starts, dtype=float, ndmin=2)
    entered = np.full(len(x), np.nan)
    converged_at = np.full(len(x), np.nan)
    frozen = np.zeros(len(x), dtype=bool)

    def control(t, points):
        u = field.vector_field(t, points)
        if scenario.u_max is None:
            return u
        peak = np.max(np.abs(u), axis=-1, keepdims=True)
        return u * np.minimum(1.0, scenario.u_max / np.maximum(peak, DEGENERATE_PEAK))

    times, states = [], []
    for step in range(steps + 1):
        t = step * dt
        times.append(t)
        states.append(x.copy())
        inside = np.linalg.norm(x - target.position(t), axis=-1) <= scenario.convergence_radius
        live = ~frozen
        entered = np.where(live & inside & np.isnan(entered), t, entered)
        entered = np.where(live & ~inside, np.nan, entered)
        held = live & inside & (t - entered >= scenario.hold_time - 1e-9)
        converged_at = np.where(held, entered, np.where(live & ~inside, np.nan, converged_at))
        if early_stop:
            frozen |= ~np.isnan(converged_at)
        if step == steps or (early_stop and frozen.all()):
            break
        k1 = control(t, x)
        if scenario.u_max is not None:
            x = x + dt * k1
        else:
            k2 = control(t + dt / 2, x + dt / 2 * k1)
            k3 = control(t + dt / 2, x + dt / 2 * k2)
            k4 = control(t + dt, x + dt * k3)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationDivergedError(step + 1, t + dt)

    logger.info(
        "batch of %d start(s) for '%s': %d converged after %d step(s)",
        len(x),
        scenario.name,
        int(np.count_nonzero(~np.isnan(converged_at))),
        len(times) - 1,
    )
    return BatchRun(np.array(times), np.array(states), converged_at)


def pairwise_min_distance_margin(logs: Sequence[TrajectoryLog]) -> float:
    """Smallest agent-agent clearance over every logged step."""
    agent_names = {log.agent for log in logs}
    best = math.inf
    for log in logs:
        columns = [i for i, name in enumerate(log.clearance_names) if name in agent_names]
        if columns:
            best = min(best, float(log.clearances[:, columns].min()))
    return best


type JointReference = Callable[[float], tuple[np.ndarray, np.ndarray, np.ndarray]]


class ArmTracking(NamedTuple):
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    torque: np.ndarray
    q_d: np.ndarray


def plan_reference(plan: JointPlan) -> JointReference:
    """Cubic-spline reference through the sampled plan.

    Position, velocity and acceleration all come from the same spline, so the
    feed-forward terms stay consistent with q_d between samples.
    """
    spline = CubicSpline(plan.t, plan.q, axis=0)
    velocity = spline.derivative(1)
    acceleration = spline.derivative(2)

    def reference(t: float):
        return spline(t), velocity(t), acceleration(t)

    return reference


def track_reference(
    model: TwoLinkArm,
    reference: JointReference,
    q0,
    qdot0,
    Kp,
    Kv,
    horizon: float,
    dt: float = 0.01,
) -> ArmTracking:
    """RK4 integration of the arm under the inverse-dynamics law."""

    def derivative(t, s):
        q, qdot = s[:2], s[2:]
        q_d, qdot_d, qddot_d = reference(t)
        torque = arm_inverse_dynamics(model, q, qdot, q_d, qdot_d, qddot_d, Kp, Kv)
        return np.concatenate([qdot, arm_dynamics(model, q, qdot, torque)]), torque

    steps = int(round(horizon / dt))
    t = dt * np.arange(steps + 1)
    states = np.empty((steps + 1, 4))
    torques = np.empty((steps + 1, 2))
    states[0] = np.concatenate([np.asarray(q0, dtype=float), np.asarray(qdot0, dtype=float)])
    for i in range(steps + 1):
        s = states[i]
        k1, torques[i] = derivative(t[i], s)
        if i == steps:
            break
        k2, _ = derivative(t[i] + dt / 2, s + dt / 2 * k1)
        k3, _ = derivative(t[i] + dt / 2, s + dt / 2 * k2)
        k4, _ = derivative(t[i] + dt, s + dt * k3)
        states[i + 1] = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(states[i + 1])):
            raise SimulationDivergedError(i + 1, float(t[i + 1]))
    q_d = np.array([reference(ti)[0] for ti in t])
    return ArmTracking(t=t, q=states[:, :2], qdot=states[:, 2:], torque=torques, q_d=q_d)


class ArmRun(NamedTuple):
    joint_obstacles: list[tuple[np.ndarray, float]]
    coverage: float
    plan: JointPlan
    tracking: ArmTracking
    end_effector: np.ndarray
    end_effector_clearance: np.ndarray
    link_clearance: np.ndarray
    tracking_error: np.ndarray


def run_arm(scenario: ArmScenario) -> ArmRun:
    """Map obstacles to joint space, plan with the joint density, track with inverse dynamics."""
    model = scenario.model
    circles = workspace_to_joint_obstacles(model, scenario.task_obstacles, scenario.grid_resolution)
    mask = collision_mask(model, scenario.task_obstacles, scenario.grid_resolution)
    coverage = joint_obstacle_coverage(circles, mask)
    if coverage < 0.99:
        logger.warning(
            "configuration-space circles cover only %.1f%% of the collision grid", 100 * coverage
        )
    obstacles: list[ObstacleSpec] = joint_obstacle_specs(circles, scenario.theta, scenario.sensing_margin)
    target = JointTargetTrajectory(model, scenario.task_target, scenario.elbow)
    spec = JointDensitySpec(
        obstacles=obstacles,
        target=target,
        alpha=scenario.alpha,
        beta=scenario.beta,
        kappa=scenario.kappa,
        feedforward=scenario.feedforward,
    )
    q0 = arm_ik(model, scenario.task_target.position(0.0), scenario.elbow)
    plan = joint_motion_plan(spec, q0, scenario.horizon, scenario.dt)
    tracking = track_reference(
        model,
        plan_reference(plan),
        plan.q[0],
        plan.qdot[0],
        scenario.Kp,
        scenario.Kv,
        scenario.horizon,
        scenario.dt,
    )
    _, end = arm_fk(model, tracking.q)
    if scenario.task_obstacles:
        ee_clearance = np.min(
            [np.linalg.norm(end - c, axis=1) - r for c, r in scenario.task_obstacles], axis=0
        )
        arm_clearance = np.min(
            [link_clearance(model, tracking.q, c, r) for c, r in scenario.task_obstacles], axis=0
        )
    else:
        ee_clearance = np.full(len(tracking.t), math.inf)
        arm_clearance = np.full(len(tracking.t), math.inf)
    error = np.linalg.norm(tracking.q - tracking.q_d, axis=1)
    logger.info(
        "arm run: min end-effector clearance %.4f, max tracking error %.4f rad",
        float(ee_clearance.min()),
        float(error.max()),
    )
    return ArmRun(circles, coverage, plan, tracking, end, ee_clearance, arm_clearance, error)
