"""Command-line front end for scenarios, certification and the case studies."""

import logging
import math
from pathlib import Path

import click
import numpy as np

from .certify import Certifier, FlowEscapeError
from .config_loader import ConfigError, ConfigLoader
from .model.robot_kind import BACKSTEPPING, DOUBLE_INTEGRATOR, GRADIENT, SFM
from .model.scenario_config import ScenarioConfig
from .report_writer import ReportWriter
from .robots import InfeasibleWorkspaceError, PlanIntegrationError, PlanViolationError
from .sampling import UnsafeRegion, ae_convergence_sample, estimate_occupancy
from .scenario import Scenario, build_arm_scenario, build_scenario
from .sim import SimulationDivergedError, pairwise_min_distance_margin, run_arm, simulate
from .trajectory_logger import TrajectoryLogger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_SAFETY_VIOLATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_CERTIFY_FAILED = 4

config_option = click.option(
    "--config",
    "config_ref",
    required=True,
    help="Scenario YAML file, or the name of a bundled scenario.",
)
out_option = click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("out"),
    show_default=True,
    help="Output directory.",
)
seed_option = click.option("--seed", type=int, default=None, help="Override the scenario seed.")
dt_option = click.option("--dt", type=float, default=None, help="Override the integration step (s).")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
def cli(verbose: bool):
    """Density-function safe navigation: simulate, certify and reproduce case studies."""
    _setup_logging(verbose)


def _setup_logging(verbose: bool):
    """Configure INFO-level logging (DEBUG with --verbose)."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load(config_ref: str, seed: int | None = None, dt: float | None = None) -> ScenarioConfig:
    config = ConfigLoader().load(config_ref)
    if seed is not None:
        config = config._replace(seed=seed)
    if dt is not None:
        if dt <= 0:
            raise ConfigError(f"--dt must be positive, got {dt}", "command line")
        config = config._replace(integration=config.integration._replace(dt=dt))
    return config


def _build(config: ScenarioConfig) -> Scenario:
    if not config.agents:
        raise ConfigError("scenario defines no agents", config.name)
    try:
        return build_scenario(config)
    except ValueError as e:
        raise ConfigError(str(e), config.name) from e


def _fail_config(error: Exception):
    click.echo(f"config error: {error}", err=True)
    raise SystemExit(EXIT_CONFIG_ERROR)


def _write_logs(scenario: Scenario, logs, folder: Path) -> dict:
    csv_logger = TrajectoryLogger()
    for log in logs:
        csv_logger.write(log, folder / f"{log.agent}.csv", scenario.log_step)
    summary = ReportWriter().run_summary(scenario.name, logs)
    ReportWriter().save(folder / "summary.json", summary)
    return summary


@cli.command("simulate")
@config_option
@out_option
@seed_option
@dt_option
def simulate_command(config_ref: str, out: Path, seed: int | None, dt: float | None):
    """Run one closed-loop scenario and write CSV logs plus a JSON summary."""
    try:
        scenario = _build(_load(config_ref, seed, dt))
    except ConfigError as e:
        _fail_config(e)
    try:
        logs = simulate(scenario)
    except SimulationDivergedError:
        logger.exception("simulation diverged")
        raise SystemExit(EXIT_SAFETY_VIOLATION)
    summary = _write_logs(scenario, logs, out)
    click.echo(f"safe={summary['safe']} converged={summary['converged']}")
    if not summary["safe"]:
        raise SystemExit(EXIT_SAFETY_VIOLATION)
    if not summary["converged"]:
        raise SystemExit(EXIT_NOT_CONVERGED)


@cli.command("certify")
@config_option
@click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("out/certificate.json"),
    show_default=True,
    help="Certificate report path.",
)
@click.option("--samples", type=int, default=None, help="Override the Liouville sample count.")
@dt_option
def certify_command(config_ref: str, out: Path, samples: int | None, dt: float | None):
    """Estimate constants, compute parameter ranges and run the sampled checks."""
    try:
        config = _load(config_ref)
        scenario = _build(config)
        if scenario.is_multiagent or scenario.controller != GRADIENT:
            raise ConfigError("certification needs a single-agent gradient scenario", config.name)
    except ConfigError as e:
        _fail_config(e)

    settings = config.certify
    certifier = Certifier(
        scenario.field,
        scenario.lower,
        scenario.upper,
        horizon=scenario.horizon,
        grid_points=settings.grid_points,
        time_samples=settings.time_samples,
        delta=scenario.delta,
        exclude_local_ball=settings.exclude_local_ball,
        rays=settings.rays,
    )
    liouville = None
    if settings.liouville_set is not None:
        liouville = (
            np.asarray(settings.liouville_set.center),
            settings.liouville_set.radius,
            settings.liouville_t0,
            settings.liouville_t1,
            samples or settings.liouville_samples,
            dt or settings.liouville_dt,
        )
    try:
        report = certifier.report(liouville)
    except FlowEscapeError as e:
        logger.error("Liouville check failed: %s", e)
        raise SystemExit(EXIT_CERTIFY_FAILED)
    ReportWriter().save(out, report._asdict() | {"passed": report.passed})
    click.echo(
        f"alpha_min={report.alpha_min:.4g} beta_min={report.beta_min:.4g} "
        f"lemma1_margin={report.lemma1_margin:.4g} passed={report.passed}"
    )
    if not report.passed:
        raise SystemExit(EXIT_CERTIFY_FAILED)


@cli.command("occupancy")
@config_option
@click.option("--samples", type=int, default=None, help="Number of sampled initial conditions.")
@out_option
@seed_option
@dt_option
@click.option("--ae", is_flag=True, help="Also report the almost-everywhere convergence fraction.")
def occupancy_command(
    config_ref: str, samples: int | None, out: Path, seed: int | None, dt: float | None, ae: bool
):
    """Monte-Carlo occupancy of the unsafe sets and an occupancy grid."""
    try:
        config = _load(config_ref, seed, dt)
        scenario = _build(config)
        if scenario.is_multiagent:
            raise ConfigError("occupancy sampling needs a single-agent scenario", config.name)
        if samples is not None and samples < 1:
            raise ConfigError(f"--samples must be at least 1, got {samples}", "command line")
    except ConfigError as e:
        _fail_config(e)
    count = samples or config.occupancy.samples
    estimate = estimate_occupancy(
        scenario, UnsafeRegion(scenario.obstacles), count, cells=config.occupancy.cells
    )
    TrajectoryLogger().write_grid(estimate.grid, out / "occupancy_grid.csv")
    payload = {
        "scenario": scenario.name,
        "unsafe_occupancy": estimate.value,
        "standard_error": estimate.standard_error,
        "samples": estimate.samples,
        "initial_set_volume": estimate.volume,
        "grid_x_edges": estimate.grid_edges[0],
        "grid_y_edges": estimate.grid_edges[1],
    }
    if ae:
        convergence = ae_convergence_sample(scenario, count)
        payload["converged_fraction"] = convergence.fraction
        payload["failures"] = convergence.failures
    ReportWriter().save(out / "occupancy.json", payload)
    click.echo(f"unsafe occupancy={estimate.value:.6g} (+/- {estimate.standard_error:.2g})")
    if estimate.value > 0.0:
        raise SystemExit(EXIT_SAFETY_VIOLATION)


def _heading_variation(logs) -> float:
    return float(sum(log.summary.heading_total_variation for log in logs))


@cli.command("compare-sfm")
@config_option
@out_option
def compare_sfm_command(config_ref: str, out: Path):
    """Run the density backstepping controller and the social force model on one scene."""
    try:
        config = _load(config_ref)
        if config.robot != DOUBLE_INTEGRATOR:
            raise ConfigError("compare-sfm needs double-integrator agents", config.name)
        density_scenario = _build(config._replace(controller=BACKSTEPPING))
        sfm_scenario = _build(config._replace(controller=SFM))
    except ConfigError as e:
        _fail_config(e)

    results = {}
    for label, scenario in (("density", density_scenario), ("sfm", sfm_scenario)):
        logs = simulate(scenario)
        _write_logs(scenario, logs, out / label)
        results[label] = {
            "min_clearance": pairwise_min_distance_margin(logs),
            "heading_total_variation": _heading_variation(logs),
            "control_total_variation": float(sum(l.summary.control_total_variation for l in logs)),
            "converged": all(l.summary.converged for l in logs),
            "safe": all(l.is_safe for l in logs),
        }
    smoother = results["density"]["heading_total_variation"] < results["sfm"]["heading_total_variation"]
    if not smoother:
        logger.warning(
            "density heading variation %.4g is not below SFM's %.4g",
            results["density"]["heading_total_variation"],
            results["sfm"]["heading_total_variation"],
        )
    ReportWriter().save(
        out / "comparison.json", {"scenario": config.name, **results, "density_smoother": smoother}
    )
    click.echo(
        f"heading variation: density={results['density']['heading_total_variation']:.4g} "
        f"sfm={results['sfm']['heading_total_variation']:.4g}"
    )
    if not (results["density"]["safe"] and results["sfm"]["safe"]):
        raise SystemExit(EXIT_SAFETY_VIOLATION)
    if not (results["density"]["converged"] and results["sfm"]["converged"]):
        raise SystemExit(EXIT_NOT_CONVERGED)


@cli.command("arm")
@config_option
@out_option
@dt_option
def arm_command(config_ref: str, out: Path, dt: float | None):
    """Configuration-space obstacles, joint density plan and inverse-dynamics tracking."""
    try:
        scenario = build_arm_scenario(_load(config_ref, dt=dt))
    except (ConfigError, ValueError) as e:
        _fail_config(e)
    try:
        run = run_arm(scenario)
    except (
        PlanViolationError,
        PlanIntegrationError,
        InfeasibleWorkspaceError,
        SimulationDivergedError,
    ):
        logger.exception("arm pipeline failed")
        raise SystemExit(EXIT_SAFETY_VIOLATION)

    tracking = run.tracking
    stride = max(1, int(round(scenario.log_step / scenario.dt)))
    TrajectoryLogger().write_table(
        {
            "t": tracking.t,
            "q_1": tracking.q[:, 0],
            "q_2": tracking.q[:, 1],
            "q_d_1": tracking.q_d[:, 0],
            "q_d_2": tracking.q_d[:, 1],
            "tau_1": tracking.torque[:, 0],
            "tau_2": tracking.torque[:, 1],
            "ee_x": run.end_effector[:, 0],
            "ee_y": run.end_effector[:, 1],
            "d_end_effector": run.end_effector_clearance,
            "d_arm": run.link_clearance,
            "tracking_error": run.tracking_error,
        },
        out / "arm.csv",
        stride,
    )
    min_clearance = float(run.end_effector_clearance.min())
    ReportWriter().save(
        out / "arm_summary.json",
        {
            "joint_obstacles": [
                {"center": center, "radius": radius} for center, radius in run.joint_obstacles
            ],
            "coverage": run.coverage,
            "min_end_effector_clearance": min_clearance,
            "min_arm_clearance": float(run.link_clearance.min()),
            "max_tracking_error": float(run.tracking_error.max()),
            "min_plan_psi": float(run.plan.psi.min()),
        },
    )
    click.echo(f"min end-effector clearance={min_clearance:.4g}")
    if not min_clearance > 0.0 or math.isnan(min_clearance):
        raise SystemExit(EXIT_SAFETY_VIOLATION)
