import logging
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .model.control_command import SFMParams
from .model.robot_kind import (
    COMPATIBLE_CONTROLLERS,
    CONTROLLER_KINDS,
    GRADIENT,
    ROBOT_KINDS,
    SINGLE_INTEGRATOR,
)
from .model.scenario_config import (
    AgentConfig,
    ArmConfig,
    CertifyConfig,
    ControlConfig,
    DensityConfig,
    InitialSetConfig,
    IntegrationConfig,
    MonitorConfig,
    ObstacleConfig,
    OccupancyConfig,
    ScenarioConfig,
    TaskObstacleConfig,
    WorkspaceConfig,
)
from .trajectories import trajectory_from_config

logger = logging.getLogger(__name__)

MISSING = object()


class ConfigError(ValueError):
    """Invalid scenario configuration, anchored to a file line when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        location = f"{source}:{line}" if line is not None else source
        super().__init__(f"{location}: {message}")


def bundled_scenarios() -> list[str]:
    """Names of the scenario files shipped with the package."""
    folder = resources.files("densitynav") / "scenarios"
    return sorted(p.name.removesuffix(".yml") for p in folder.iterdir() if p.name.endswith(".yml"))


class _Reader:
    """Typed access to the raw mapping with line lookup through the YAML node tree."""

    def __init__(self, source: str, node: yaml.Node | None):
        self.source = source
        self.node = node

    def line(self, path: tuple) -> int | None:
        node = self.node
        if node is None:
            return None
        line = node.start_mark.line + 1
        for key in path:
            if isinstance(node, yaml.MappingNode):
                for key_node, value_node in node.value:
                    if key_node.value == str(key):
                        line = key_node.start_mark.line + 1
                        node = value_node
                        break
                else:
                    return line
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
                line = node.start_mark.line + 1
            else:
                return line
        return line

    def error(self, path: tuple, message: str) -> ConfigError:
        dotted = ".".join(str(p) for p in path)
        return ConfigError(f"'{dotted}': {message}" if dotted else message, self.source, self.line(path))

    def section(self, data: dict, key: str, path: tuple = ()) -> dict:
        value = data.get(key)
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(path + (key,), "expected a mapping")
        return value

    def number(
        self,
        data: dict,
        key: str,
        path: tuple,
        default: Any = MISSING,
        positive: bool = False,
        nonnegative: bool = False,
        loud: bool = False,
    ) -> float | None:
        if data.get(key) is None:
            if default is MISSING:
                raise self.error(path + (key,), "required value is missing")
            if default is not None:
                log = logger.warning if loud else logger.debug
                log("Missing '%s' in config, using default: %s", ".".join(map(str, path + (key,))), default)
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(path + (key,), f"expected a number, got {value!r}")
        value = float(value)
        if not np.isfinite(value):
            raise self.error(path + (key,), "must be finite")
        if positive and value <= 0:
            raise self.error(path + (key,), f"must be positive, got {value}")
        if nonnegative and value < 0:
            raise self.error(path + (key,), f"must be non-negative, got {value}")
        return value

    def integer(self, data: dict, key: str, path: tuple, default: int) -> int:
        value = data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise self.error(path + (key,), f"expected a positive integer, got {value!r}")
        return value

    def flag(self, data: dict, key: str, path: tuple, default: bool) -> bool:
        value = data.get(key, default)
        if not isinstance(value, bool):
            raise self.error(path + (key,), f"expected true/false, got {value!r}")
        return value

    def vector(self, data: dict, key: str, path: tuple, dim: int | None = None) -> list[float]:
        value = data.get(key)
        if not isinstance(value, list) or not value or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise self.error(path + (key,), f"expected a list of numbers, got {value!r}")
        if dim is not None and len(value) != dim:
            raise self.error(path + (key,), f"expected {dim} components, got {len(value)}")
        return [float(v) for v in value]

    def trajectory(self, data: dict, key: str, path: tuple, dim: int):
        value = data.get(key)
        try:
            trajectory = trajectory_from_config(value)
        except (ValueError, TypeError) as e:
            raise self.error(path + (key,), str(e)) from e
        if trajectory.dim != dim:
            raise self.error(path + (key,), f"expected a {dim}-dimensional trajectory")
        if isinstance(value, list):
            return [float(v) for v in value]
        return trajectory.to_config()


class ConfigLoader:
    """YAML scenario loading, validation and serialisation."""

    DEFAULT_ALPHA = 0.2
    DEFAULT_BETA = 10.0
    DEFAULT_THETA = 0.05
    DEFAULT_KAPPA = 1.0
    DEFAULT_DELTA = 1e-3
    DEFAULT_SEED = 0
    DEFAULT_ROBOT = SINGLE_INTEGRATOR
    DEFAULT_CONTROLLER = GRADIENT
    DEFAULT_K = 1.0
    DEFAULT_DT = 0.01
    DEFAULT_HORIZON = 60.0
    DEFAULT_LOG_STEP = 0.1
    DEFAULT_CONVERGENCE_RADIUS = 0.1
    DEFAULT_HOLD_TIME = 1.0
    DEFAULT_CERTIFY_GRID_POINTS = 200
    DEFAULT_CERTIFY_TIME_SAMPLES = 50
    DEFAULT_CERTIFY_RAYS = 16
    DEFAULT_LIOUVILLE_SAMPLES = 10_000
    DEFAULT_LIOUVILLE_DT = 1e-3
    DEFAULT_LIOUVILLE_T1 = 1.0
    DEFAULT_OCCUPANCY_SAMPLES = 100
    DEFAULT_OCCUPANCY_CELLS = 100
    DEFAULT_ARM_ELBOW = -1
    DEFAULT_ARM_GRID_RESOLUTION = 180
    DEFAULT_ARM_SENSING_MARGIN = 0.5
    DEFAULT_ARM_KP = 1.0
    DEFAULT_ARM_KV = 10.0

    # guidance ranges that work well in practice; values outside only warn
    SUGGESTED_RANGES = {"alpha": (0.1, 1.0), "beta": (1.0, 10.0), "theta": (0.01, 0.1)}

    def resolve(self, config: str | Path) -> tuple[str, str]:
        """Return (source name, YAML text) for a path or a bundled scenario name."""
        path = Path(config)
        if path.is_file():
            return str(path), path.read_text(encoding="utf-8")
        name = str(config).removesuffix(".yml")
        bundled = resources.files("densitynav") / "scenarios" / f"{name}.yml"
        if bundled.is_file():
            return f"scenarios/{name}.yml", bundled.read_text(encoding="utf-8")
        raise ConfigError(
            f"no such file or bundled scenario (bundled: {', '.join(bundled_scenarios())})",
            str(config),
        )

    def load(self, config: str | Path) -> ScenarioConfig:
        """Read, parse and validate a scenario file or bundled scenario."""
        source, text = self.resolve(config)
        try:
            data = yaml.safe_load(text)
            node = yaml.compose(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {e}", source, mark.line + 1 if mark else None) from e
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping", source, 1)
        scenario = self.parse(data, source, node)
        logger.info("Loaded scenario '%s' from '%s'", scenario.name, source)
        return scenario

    def parse(self, data: dict, source: str = "<config>", node: yaml.Node | None = None) -> ScenarioConfig:
        reader = _Reader(source, node)
        workspace = self._workspace(reader, data)
        dim = len(workspace.lower)

        robot = data.get("robot", self.DEFAULT_ROBOT)
        if robot not in ROBOT_KINDS:
            raise reader.error(("robot",), f"unknown robot '{robot}' (expected one of {list(ROBOT_KINDS)})")
        controller = data.get("controller", self.DEFAULT_CONTROLLER)
        if controller not in CONTROLLER_KINDS:
            raise reader.error(("controller",), f"unknown controller '{controller}'")
        if controller not in COMPATIBLE_CONTROLLERS[robot]:
            raise reader.error(("controller",), f"'{controller}' cannot drive a {robot}")

        density = self._density(reader, data)
        obstacles = self._obstacles(reader, data, dim, density)
        agents = self._agents(reader, data, dim)
        initial_set = self._initial_set(reader, data.get("initial_set"), ("initial_set",), dim)
        config = ScenarioConfig(
            name=str(data.get("name", Path(source).stem)),
            robot=robot,
            controller=controller,
            seed=self._seed(reader, data),
            workspace=workspace,
            density=density,
            control=self._control(reader, data),
            integration=self._integration(reader, data),
            monitors=self._monitors(reader, data),
            certify=self._certify(reader, data, dim),
            occupancy=self._occupancy(reader, data),
            sfm=self._sfm(reader, data),
            obstacles=obstacles,
            agents=agents,
            initial_set=initial_set,
            arm=self._arm(reader, data),
        )
        self._check_consistency(reader, config, "agents" in data)
        return config

    def _seed(self, reader: _Reader, data: dict) -> int:
        seed = data.get("seed", self.DEFAULT_SEED)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise reader.error(("seed",), f"expected a non-negative integer, got {seed!r}")
        return seed

    def _workspace(self, reader: _Reader, data: dict) -> WorkspaceConfig:
        section = reader.section(data, "workspace")
        if not section:
            raise reader.error(("workspace",), "required section is missing")
        lower = reader.vector(section, "lower", ("workspace",))
        upper = reader.vector(section, "upper", ("workspace",), len(lower))
        if len(lower) < 2:
            raise reader.error(("workspace", "lower"), "workspace must be at least 2-dimensional")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise reader.error(("workspace",), "lower must be below upper in every coordinate")
        return WorkspaceConfig(lower, upper)

    def _density(self, reader: _Reader, data: dict) -> DensityConfig:
        path = ("density",)
        section = reader.section(data, "density")
        alpha = reader.number(section, "alpha", path, self.DEFAULT_ALPHA, positive=True, loud=True)
        beta = reader.number(section, "beta", path, self.DEFAULT_BETA, nonnegative=True, loud=True)
        theta = reader.number(section, "theta", path, self.DEFAULT_THETA, loud=True)
        self._check_theta(reader, theta, path + ("theta",))
        for name, value in (("alpha", alpha), ("beta", beta), ("theta", theta)):
            low, high = self.SUGGESTED_RANGES[name]
            if not low <= value <= high:
                logger.warning("%s=%s is outside the suggested range [%s, %s]", name, value, low, high)
        return DensityConfig(
            alpha=alpha,
            beta=beta,
            theta=theta,
            kappa=reader.number(section, "kappa", path, self.DEFAULT_KAPPA, positive=True),
            delta=reader.number(section, "delta", path, self.DEFAULT_DELTA, positive=True),
            reciprocal_distance=reader.flag(section, "reciprocal_distance", path, False),
            inflate_exclusion=reader.flag(section, "inflate_exclusion", path, True),
        )

    def _check_theta(self, reader: _Reader, theta: float, path: tuple) -> None:
        if not 0.0 < theta < 1.0:
            raise reader.error(path, f"theta must lie in (0, 1), got {theta}")

    def _obstacles(self, reader: _Reader, data: dict, dim: int, density: DensityConfig) -> list[ObstacleConfig]:
        raw = data.get("obstacles") or []
        if not isinstance(raw, list):
            raise reader.error(("obstacles",), "expected a list")
        obstacles = []
        for index, item in enumerate(raw):
            path = ("obstacles", index)
            if not isinstance(item, dict):
                raise reader.error(path, "expected a mapping")
            r = reader.number(item, "r", path, positive=True)
            s = reader.number(item, "s", path, positive=True)
            if s <= r:
                raise reader.error(path + ("s",), f"sensing radius {s} must exceed radius {r}")
            theta = reader.number(item, "theta", path, None)
            if theta is not None:
                self._check_theta(reader, theta, path + ("theta",))
            obstacles.append(
                ObstacleConfig(
                    name=str(item.get("name", f"obstacle{index + 1}")),
                    r=r,
                    s=s,
                    center=reader.trajectory(item, "center", path, dim),
                    theta=theta,
                )
            )
        return obstacles

    def _agents(self, reader: _Reader, data: dict, dim: int) -> list[AgentConfig]:
        arm_only = "start" not in data and "target" not in data and not data.get("agents")
        if arm_only and data.get("arm") is not None:
            return []
        if "agents" not in data:
            if "start" not in data or "target" not in data:
                raise reader.error((), "either 'agents' or both 'start' and 'target' are required")
            return [
                AgentConfig(
                    name=str(data.get("agent_name", "robot")),
                    radius=0.0,
                    sensing_radius=0.0,
                    start=reader.vector(data, "start", (), dim),
                    target=reader.trajectory(data, "target", (), dim),
                    heading=reader.number(data, "heading", (), 0.0),
                )
            ]
        raw = data["agents"]
        if not isinstance(raw, list) or not raw:
            raise reader.error(("agents",), "expected a non-empty list")
        agents = []
        for index, item in enumerate(raw):
            path = ("agents", index)
            if not isinstance(item, dict):
                raise reader.error(path, "expected a mapping")
            radius = reader.number(item, "radius", path, 0.0, nonnegative=True)
            sensing = reader.number(item, "sensing_radius", path, 0.0, nonnegative=True)
            if len(raw) > 1 and not 0.0 < radius < sensing:
                raise reader.error(path, f"agents need 0 < radius < sensing_radius, got {radius}, {sensing}")
            theta = reader.number(item, "theta", path, None)
            if theta is not None:
                self._check_theta(reader, theta, path + ("theta",))
            agents.append(
                AgentConfig(
                    name=str(item.get("name", f"agent{index + 1}")),
                    radius=radius,
                    sensing_radius=sensing,
                    start=reader.vector(item, "start", path, dim),
                    target=reader.trajectory(item, "target", path, dim),
                    heading=reader.number(item, "heading", path, 0.0),
                    alpha=reader.number(item, "alpha", path, None, positive=True),
                    beta=reader.number(item, "beta", path, None, nonnegative=True),
                    theta=theta,
                    kappa=reader.number(item, "kappa", path, None, positive=True),
                )
            )
        names = [agent.name for agent in agents]
        if len(set(names)) != len(names):
            raise reader.error(("agents",), "agent names must be unique")
        return agents

    def _initial_set(self, reader: _Reader, raw, path: tuple, dim: int) -> InitialSetConfig | None:
        if raw is None:
            return None
        if not isinstance(raw, dict):
            raise reader.error(path, "expected a mapping with 'center' and 'radius'")
        return InitialSetConfig(
            center=reader.vector(raw, "center", path, dim),
            radius=reader.number(raw, "radius", path, positive=True),
        )

    def _control(self, reader: _Reader, data: dict) -> ControlConfig:
        path = ("control",)
        section = reader.section(data, "control")
        return ControlConfig(
            u_max=reader.number(section, "u_max", path, None, positive=True),
            K=reader.number(section, "K", path, self.DEFAULT_K, positive=True),
            feedforward=reader.flag(section, "feedforward", path, True),
        )

    def _integration(self, reader: _Reader, data: dict) -> IntegrationConfig:
        path = ("integration",)
        section = reader.section(data, "integration")
        dt = reader.number(section, "dt", path, self.DEFAULT_DT, positive=True, loud=True)
        horizon = reader.number(section, "horizon", path, self.DEFAULT_HORIZON, positive=True, loud=True)
        log_step = reader.number(section, "log_step", path, self.DEFAULT_LOG_STEP, positive=True)
        if dt > horizon:
            raise reader.error(path + ("dt",), f"dt={dt} exceeds the horizon {horizon}")
        return IntegrationConfig(dt, horizon, max(log_step, dt))

    def _monitors(self, reader: _Reader, data: dict) -> MonitorConfig:
        path = ("monitors",)
        section = reader.section(data, "monitors")
        return MonitorConfig(
            convergence_radius=reader.number(
                section, "convergence_radius", path, self.DEFAULT_CONVERGENCE_RADIUS, positive=True
            ),
            hold_time=reader.number(section, "hold_time", path, self.DEFAULT_HOLD_TIME, nonnegative=True),
        )

    def _certify(self, reader: _Reader, data: dict, dim: int) -> CertifyConfig:
        path = ("certify",)
        section = reader.section(data, "certify")
        t0 = reader.number(section, "liouville_t0", path, 0.0, nonnegative=True)
        t1 = reader.number(section, "liouville_t1", path, self.DEFAULT_LIOUVILLE_T1, positive=True)
        if t1 <= t0:
            raise reader.error(path + ("liouville_t1",), "must exceed liouville_t0")
        return CertifyConfig(
            grid_points=reader.integer(section, "grid_points", path, self.DEFAULT_CERTIFY_GRID_POINTS),
            time_samples=reader.integer(section, "time_samples", path, self.DEFAULT_CERTIFY_TIME_SAMPLES),
            rays=reader.integer(section, "rays", path, self.DEFAULT_CERTIFY_RAYS),
            exclude_local_ball=reader.flag(section, "exclude_local_ball", path, False),
            liouville_samples=reader.integer(section, "liouville_samples", path, self.DEFAULT_LIOUVILLE_SAMPLES),
            liouville_dt=reader.number(section, "liouville_dt", path, self.DEFAULT_LIOUVILLE_DT, positive=True),
            liouville_t0=t0,
            liouville_t1=t1,
            liouville_set=self._initial_set(reader, section.get("liouville_set"), path + ("liouville_set",), dim),
        )

    def _occupancy(self, reader: _Reader, data: dict) -> OccupancyConfig:
        path = ("occupancy",)
        section = reader.section(data, "occupancy")
        return OccupancyConfig(
            samples=reader.integer(section, "samples", path, self.DEFAULT_OCCUPANCY_SAMPLES),
            cells=reader.integer(section, "cells", path, self.DEFAULT_OCCUPANCY_CELLS),
        )

    def _sfm(self, reader: _Reader, data: dict) -> SFMParams:
        path = ("sfm",)
        section = reader.section(data, "sfm")
        defaults = SFMParams()
        return SFMParams(
            **{
                field: reader.number(section, field, path, getattr(defaults, field), positive=True)
                for field in SFMParams._fields
            }
        )

    def _arm(self, reader: _Reader, data: dict) -> ArmConfig | None:
        if data.get("arm") is None:
            return None
        path = ("arm",)
        section = reader.section(data, "arm")
        raw_obstacles = section.get("obstacles") or []
        if not isinstance(raw_obstacles, list):
            raise reader.error(path + ("obstacles",), "expected a list")
        obstacles = []
        for index, item in enumerate(raw_obstacles):
            item_path = path + ("obstacles", index)
            if not isinstance(item, dict):
                raise reader.error(item_path, "expected a mapping")
            obstacles.append(
                TaskObstacleConfig(
                    center=reader.vector(item, "center", item_path, 2),
                    radius=reader.number(item, "radius", item_path, positive=True),
                )
            )
        elbow = section.get("elbow", self.DEFAULT_ARM_ELBOW)
        if elbow not in (-1, 1):
            raise reader.error(path + ("elbow",), f"elbow must be -1 or 1, got {elbow!r}")
        return ArmConfig(
            m1=reader.number(section, "m1", path, 1.0, positive=True),
            m2=reader.number(section, "m2", path, 1.0, positive=True),
            l1=reader.number(section, "l1", path, 1.0, positive=True),
            l2=reader.number(section, "l2", path, 1.0, positive=True),
            g=reader.number(section, "g", path, 9.81, nonnegative=True),
            task_target=reader.trajectory(section, "task_target", path, 2),
            obstacles=obstacles,
            elbow=elbow,
            grid_resolution=reader.integer(section, "grid_resolution", path, self.DEFAULT_ARM_GRID_RESOLUTION),
            sensing_margin=reader.number(
                section, "sensing_margin", path, self.DEFAULT_ARM_SENSING_MARGIN, positive=True
            ),
            Kp=reader.number(section, "Kp", path, self.DEFAULT_ARM_KP, positive=True),
            Kv=reader.number(section, "Kv", path, self.DEFAULT_ARM_KV, positive=True),
        )

    def _check_consistency(self, reader: _Reader, config: ScenarioConfig, listed_agents: bool) -> None:
        """Initial states clear of unsafe sets and of each other; field construction possible."""
        obstacle_curves = [trajectory_from_config(o.center) for o in config.obstacles]
        targets = [trajectory_from_config(a.target) for a in config.agents]
        if len(config.agents) == 1 and not targets[0].is_static:
            if any(not curve.is_static for curve in obstacle_curves):
                raise reader.error(("target",), "a moving target needs static obstacles")
        if len(config.agents) > 1 and any(not target.is_static for target in targets):
            raise reader.error(("agents",), "multi-agent targets must be static")
        for index, agent in enumerate(config.agents):
            start = np.asarray(agent.start)
            for obstacle, curve in zip(config.obstacles, obstacle_curves):
                if np.linalg.norm(start - curve.position(0.0)) <= obstacle.r + agent.radius:
                    raise reader.error(
                        ("agents", index, "start") if listed_agents else ("start",),
                        f"start of '{agent.name}' lies inside obstacle '{obstacle.name}'",
                    )
            for other in config.agents[index + 1 :]:
                gap = np.linalg.norm(start - np.asarray(other.start)) - agent.radius - other.radius
                if gap <= 0:
                    raise reader.error(("agents",), f"agents '{agent.name}' and '{other.name}' start in contact")

    def dump(self, config: ScenarioConfig) -> dict:
        """Plain-data form of a config; `parse(dump(c)) == c`."""
        return _plain(config)

    def save(self, config: ScenarioConfig, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            yaml.safe_dump(self.dump(config), f, default_flow_style=None, sort_keys=False)
        logger.info("Wrote resolved scenario to '%s'", path)


def _plain(value):
    if isinstance(value, tuple) and hasattr(value, "_asdict"):
        return {key: _plain(item) for key, item in value._asdict().items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value
