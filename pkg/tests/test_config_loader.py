import logging
from textwrap import dedent

import pytest

from densitynav.config_loader import ConfigError, ConfigLoader, bundled_scenarios

BASE = {
    "workspace": {"lower": [0.0, 0.0], "upper": [10.0, 10.0]},
    "start": [1.0, 1.0],
    "target": [9.0, 9.0],
}


def parse(**overrides):
    return ConfigLoader().parse({**BASE, **overrides})


def write(tmp_path, text):
    path = tmp_path / "scenario.yml"
    path.write_text(dedent(text), encoding="utf-8")
    return path


def test_bundled_scenarios_are_listed():
    names = bundled_scenarios()
    assert {"static_example", "dynamic_obstacles", "arm", "swap4"} <= set(names)


@pytest.mark.parametrize("name", bundled_scenarios())
def test_bundled_scenarios_survive_dump_and_parse(name):
    loader = ConfigLoader()
    config = loader.load(name)
    assert loader.parse(loader.dump(config)) == config


def test_save_then_load(tmp_path):
    loader = ConfigLoader()
    config = loader.load("dynamic_obstacles")
    loader.save(config, tmp_path / "resolved.yml")
    assert loader.load(tmp_path / "resolved.yml") == config


def test_defaults_fill_missing_sections():
    config = parse()
    assert config.robot == "single-integrator"
    assert config.controller == "gradient"
    assert config.density.alpha == ConfigLoader.DEFAULT_ALPHA
    assert config.integration.dt == ConfigLoader.DEFAULT_DT
    assert config.control.u_max is None
    assert config.agents[0].name == "robot"
    assert config.arm is None


def test_theta_outside_unit_interval_reports_line(tmp_path):
    path = write(
        tmp_path,
        """\
        name: bad
        workspace:
          lower: [0, 0]
          upper: [10, 10]
        start: [1, 1]
        target: [9, 9]
        density:
          theta: 1.5
        """,
    )
    with pytest.raises(ConfigError) as info:
        ConfigLoader().load(path)
    assert info.value.line == 8
    assert "theta" in str(info.value)


def test_yaml_syntax_error_is_a_config_error(tmp_path):
    path = write(tmp_path, "workspace: [unclosed\n")
    with pytest.raises(ConfigError):
        ConfigLoader().load(path)


def test_unknown_scenario_name():
    with pytest.raises(ConfigError, match="bundled"):
        ConfigLoader().load("no_such_scenario")


def test_workspace_is_required():
    with pytest.raises(ConfigError, match="workspace"):
        ConfigLoader().parse({"start": [0.0, 0.0], "target": [1.0, 1.0]})


def test_sensing_radius_must_exceed_radius():
    with pytest.raises(ConfigError, match="sensing radius"):
        parse(obstacles=[{"r": 1.0, "s": 1.0, "center": [5.0, 5.0]}])


def test_controller_must_fit_the_robot():
    with pytest.raises(ConfigError, match="cannot drive"):
        parse(controller="backstepping")


def test_unknown_robot():
    with pytest.raises(ConfigError, match="unknown robot"):
        parse(robot="hovercraft")


def test_start_inside_obstacle_is_rejected():
    with pytest.raises(ConfigError, match="inside obstacle"):
        parse(obstacles=[{"name": "rock", "r": 1.0, "s": 2.0, "center": [1.5, 1.0]}])


def test_moving_target_needs_static_obstacles():
    with pytest.raises(ConfigError, match="moving target"):
        parse(
            target={"kind": "linear", "start": [9.0, 9.0], "velocity": [0.1, 0.0]},
            obstacles=[
                {
                    "r": 0.5,
                    "s": 1.0,
                    "center": {"kind": "linear", "start": [5.0, 5.0], "velocity": [0.0, 0.1]},
                }
            ],
        )


def test_bad_trajectory_kind():
    with pytest.raises(ConfigError, match="unknown trajectory kind"):
        parse(target={"kind": "spiral"})


def test_multi_agent_needs_sensing_larger_than_radius():
    agents = [
        {"name": "a", "radius": 0.5, "sensing_radius": 0.4, "start": [1.0, 1.0], "target": [9.0, 9.0]},
        {"name": "b", "radius": 0.5, "sensing_radius": 2.0, "start": [9.0, 1.0], "target": [1.0, 9.0]},
    ]
    with pytest.raises(ConfigError, match="sensing_radius"):
        parse(agents=agents)


def test_agents_starting_in_contact_are_rejected():
    agents = [
        {"name": "a", "radius": 0.5, "sensing_radius": 2.0, "start": [1.0, 1.0], "target": [9.0, 9.0]},
        {"name": "b", "radius": 0.5, "sensing_radius": 2.0, "start": [1.5, 1.0], "target": [1.0, 9.0]},
    ]
    with pytest.raises(ConfigError, match="contact"):
        parse(agents=agents)


def test_agent_overrides_are_kept():
    agents = [
        {"name": "a", "radius": 0.5, "sensing_radius": 2.0, "start": [1.0, 1.0], "target": [9.0, 9.0], "beta": 3.0},
        {"name": "b", "radius": 0.5, "sensing_radius": 2.0, "start": [9.0, 1.0], "target": [1.0, 9.0]},
    ]
    config = parse(agents=agents)
    assert config.agents[0].beta == 3.0
    assert config.agents[1].beta is None


def test_arm_elbow_must_be_a_sign():
    with pytest.raises(ConfigError, match="elbow"):
        parse(arm={"task_target": [1.0, 0.0], "elbow": 0})


def test_parameters_outside_suggested_ranges_only_warn(caplog):
    with caplog.at_level(logging.WARNING, logger="densitynav.config_loader"):
        config = parse(density={"beta": 50.0})
    assert config.density.beta == 50.0
    assert "suggested range" in caplog.text


def test_negative_seed_is_rejected():
    with pytest.raises(ConfigError, match="seed"):
        parse(seed=-1)
