import csv
import json

import pytest
import yaml
from click.testing import CliRunner

from densitynav.cli import (
    EXIT_CERTIFY_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    cli,
)

SHORT_RUN = {
    "name": "short",
    "workspace": {"lower": [-2.0, -6.0], "upper": [14.0, 6.0]},
    "start": [0.0, 0.0],
    "target": [10.0, 0.0],
    "obstacles": [{"name": "obstacle1", "r": 1.0, "s": 2.0, "center": [3.0, 0.5]}],
    "initial_set": {"center": [0.0, 0.0], "radius": 0.2},
    "integration": {"dt": 0.01, "horizon": 1.0},
    "occupancy": {"samples": 2, "cells": 10},
}


def write_config(tmp_path, data, name="scenario.yml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


def test_invalid_theta_exits_with_config_error(tmp_path):
    config = write_config(tmp_path, {**SHORT_RUN, "density": {"theta": 1.5}})
    result = invoke("simulate", "--config", config, "--out", tmp_path / "out")
    assert result.exit_code == EXIT_CONFIG_ERROR
    assert "theta" in result.output


def test_unknown_config_exits_with_config_error(tmp_path):
    result = invoke("simulate", "--config", "missing_scenario", "--out", tmp_path / "out")
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_non_positive_dt_is_a_config_error(tmp_path):
    config = write_config(tmp_path, SHORT_RUN)
    result = invoke("simulate", "--config", config, "--out", tmp_path / "out", "--dt", "0")
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_simulate_writes_logs_and_reports_non_convergence(tmp_path):
    config = write_config(tmp_path, SHORT_RUN)
    out = tmp_path / "out"
    result = invoke("simulate", "--config", config, "--out", out)
    assert result.exit_code == EXIT_NOT_CONVERGED
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["safe"] is True
    assert summary["converged"] is False
    with (out / "robot.csv").open(newline="", encoding="utf-8") as file:
        rows = list(csv.DictReader(file))
    assert list(rows[0]) == [
        "t", "x_1", "x_2", "u_1", "u_2", "rho", "psi", "d_obstacle1", "saturated"
    ]
    assert len(rows) == 11


def test_simulate_converges_to_a_near_target(tmp_path):
    data = {
        **SHORT_RUN,
        "target": [1.0, 0.0],
        "obstacles": [],
        "integration": {"dt": 0.01, "horizon": 5.0},
    }
    result = invoke("simulate", "--config", write_config(tmp_path, data), "--out", tmp_path / "out")
    assert result.exit_code == EXIT_OK


def test_certify_flags_low_gain(tmp_path):
    data = {
        **SHORT_RUN,
        "obstacles": [
            {
                "name": "mover",
                "r": 0.75,
                "s": 1.5,
                "center": {"kind": "linear", "start": [4.0, 0.0], "velocity": [0.0, 0.25]},
            }
        ],
        "density": {"beta": 0.01},
        "integration": {"dt": 0.01, "horizon": 4.0},
        "certify": {"grid_points": 21, "time_samples": 3, "rays": 4},
    }
    out = tmp_path / "certificate.json"
    result = invoke("certify", "--config", write_config(tmp_path, data), "--out", out)
    assert result.exit_code == EXIT_CERTIFY_FAILED
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["passed"] is False
    assert report["violations"]


def test_certify_needs_a_single_agent_gradient_scenario(tmp_path):
    data = {**SHORT_RUN, "robot": "double-integrator", "controller": "backstepping"}
    result = invoke("certify", "--config", write_config(tmp_path, data))
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_occupancy_of_distant_obstacle(tmp_path):
    out = tmp_path / "out"
    result = invoke("occupancy", "--config", write_config(tmp_path, SHORT_RUN), "--out", out)
    assert result.exit_code == EXIT_OK
    report = json.loads((out / "occupancy.json").read_text(encoding="utf-8"))
    assert report["unsafe_occupancy"] == 0.0
    assert report["samples"] == 2
    assert len(report["grid_x_edges"]) == 11
    assert (out / "occupancy_grid.csv").is_file()


def test_occupancy_rejects_zero_samples(tmp_path):
    config = write_config(tmp_path, SHORT_RUN)
    result = invoke("occupancy", "--config", config, "--samples", "0", "--out", tmp_path / "out")
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_compare_sfm_needs_double_integrators(tmp_path):
    result = invoke("compare-sfm", "--config", write_config(tmp_path, SHORT_RUN))
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_arm_without_arm_section_is_a_config_error(tmp_path):
    result = invoke("arm", "--config", write_config(tmp_path, SHORT_RUN), "--out", tmp_path / "out")
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_arm_holding_a_static_target(tmp_path):
    data = {
        "name": "arm_hold",
        "workspace": {"lower": [-2.5, -2.5], "upper": [2.5, 2.5]},
        "density": {"alpha": 0.5, "beta": 50.0},
        "integration": {"dt": 0.01, "horizon": 0.5, "log_step": 0.1},
        "arm": {
            "task_target": [1.0, -0.5],
            "obstacles": [{"center": [-1.2, 1.2], "radius": 0.1}],
            "grid_resolution": 60,
        },
    }
    out = tmp_path / "out"
    result = invoke("arm", "--config", write_config(tmp_path, data), "--out", out)
    assert result.exit_code == EXIT_OK
    with (out / "arm.csv").open(newline="", encoding="utf-8") as file:
        rows = list(csv.DictReader(file))
    assert list(rows[0])[:3] == ["t", "q_1", "q_2"]
    assert len(rows) == 6
    summary = json.loads((out / "arm_summary.json").read_text(encoding="utf-8"))
    assert summary["min_end_effector_clearance"] > 0.0


@pytest.mark.scenario
@pytest.mark.parametrize("name", ["static_example", "static_example_s25"])
def test_static_examples_converge_safely(tmp_path, name):
    out = tmp_path / name
    result = invoke("simulate", "--config", name, "--out", out)
    assert result.exit_code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["safe"] is True


@pytest.mark.scenario
def test_dynamic_obstacles_stay_safe_within_the_control_bound(tmp_path):
    out = tmp_path / "dynamic"
    result = invoke("simulate", "--config", "dynamic_obstacles", "--out", out)
    assert result.exit_code in (EXIT_OK, EXIT_NOT_CONVERGED)
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["safe"] is True
    assert summary["agents"]["robot"]["max_control"] <= 2.0 + 1e-9


@pytest.mark.scenario
def test_sampled_starts_never_enter_the_unsafe_disc(tmp_path):
    out = tmp_path / "occupancy"
    result = invoke("occupancy", "--config", "occupancy_example", "--samples", 100, "--out", out)
    assert result.exit_code == EXIT_OK
    report = json.loads((out / "occupancy.json").read_text(encoding="utf-8"))
    assert report["samples"] == 100
    assert report["unsafe_occupancy"] == 0.0


@pytest.mark.scenario
def test_swap_completes_under_both_controllers(tmp_path):
    out = tmp_path / "swap"
    result = invoke("compare-sfm", "--config", "swap4", "--out", out)
    assert result.exit_code == EXIT_OK
    report = json.loads((out / "comparison.json").read_text(encoding="utf-8"))
    for label in ("density", "sfm"):
        assert report[label]["safe"] is True
        assert report[label]["converged"] is True
    assert report["density"]["heading_total_variation"] < report["sfm"]["heading_total_variation"]
    assert report["density_smoother"] is True
