import logging
import math

import numpy as np
import pytest

from densitynav.control import (
    HeadingReference,
    Neighbor,
    arm_inverse_dynamics,
    backstepping_control,
    gradient_control,
    hessian_times,
    saturate,
    sfm_control,
    unicycle_control,
)
from densitynav.model.control_command import ControlCommand, SFMParams, UnicycleState
from densitynav.model.two_link_arm import TwoLinkArm
from densitynav.robots import gravity_forces
from densitynav.utils import angle_difference


def test_gradient_control_is_scaled_gradient(moving_field):
    x = np.array([3.0, 1.0])
    command = gradient_control(moving_field, 2.0, x)
    np.testing.assert_allclose(command.u, 10.0 * moving_field.rho_grad(2.0, x))
    assert not command.saturated


def test_saturate_scales_onto_the_box():
    command = saturate(ControlCommand(np.array([3.0, -1.0])), 2.0)
    np.testing.assert_allclose(command.u, [2.0, -2.0 / 3.0])
    assert command.saturated


def test_saturate_leaves_small_commands_alone():
    original = ControlCommand(np.array([0.5, -1.5]))
    assert saturate(original, 2.0) is original


def test_saturate_rejects_non_positive_bound():
    with pytest.raises(ValueError):
        saturate(ControlCommand(np.array([1.0, 0.0])), 0.0)


def test_unicycle_conversion():
    command = unicycle_control(UnicycleState(0.0, 0.0, 0.0), [0.0, 2.0], K=3.0, d_delta_tilde_dt=0.0)
    assert command.v == pytest.approx(2.0)
    assert command.delta_tilde == pytest.approx(math.pi / 2)
    assert command.omega == pytest.approx(3.0 * math.pi / 2)


def test_unicycle_zero_command_holds_heading():
    command = unicycle_control(UnicycleState(0.0, 0.0, 0.4), [0.0, 0.0], K=3.0, d_delta_tilde_dt=1.0)
    assert command.v == 0.0
    assert command.omega == 0.0
    assert command.delta_tilde == pytest.approx(0.4)
    held = unicycle_control(UnicycleState(0.0, 0.0, 0.4), [0.0, 0.0], 3.0, 0.0, previous_delta_tilde=1.1)
    assert held.delta_tilde == pytest.approx(1.1)


def test_heading_reference_differentiates_across_the_seam():
    reference = HeadingReference(K=2.0)
    state = UnicycleState(0.0, 0.0, math.pi - 0.01)
    first = reference.command(state, [math.cos(math.pi - 0.01), math.sin(math.pi - 0.01)], dt=0.1)
    assert first.omega == pytest.approx(0.0, abs=1e-12)
    second = reference.command(state, [math.cos(-math.pi + 0.01), math.sin(-math.pi + 0.01)], dt=0.1)
    expected_rate = 0.02 / 0.1
    expected = expected_rate - 2.0 * angle_difference(state.delta, second.delta_tilde)
    assert second.omega == pytest.approx(expected)
    assert abs(second.omega) < 1.0


def test_heading_error_decreases_for_fixed_command():
    K, dt = 2.0, 0.01
    reference = HeadingReference(K)
    delta = 2.5
    u = np.array([1.0, -0.5])
    errors = []
    for _ in range(300):
        command = reference.command(UnicycleState(0.0, 0.0, delta), u, dt)
        errors.append(angle_difference(delta, command.delta_tilde) ** 2)
        delta += dt * command.omega
    assert np.all(np.diff(errors) < 0.0)
    assert errors[-1] < 1e-4


def test_hessian_times_matches_analytic_diagonal(moving_field):
    x = np.array([4.5, 0.6])
    hess = moving_field.rho_hess_diag(3.0, x)
    for i in range(2):
        direction = np.zeros(2)
        direction[i] = 1.0
        assert hessian_times(moving_field, 3.0, x, direction)[i] == pytest.approx(hess[i], rel=1e-5, abs=1e-9)
    np.testing.assert_array_equal(hessian_times(moving_field, 3.0, x, np.zeros(2)), 0.0)


def test_backstepping_at_rest_pushes_towards_gradient_law(static_field):
    x = np.array([2.0, -1.0])
    command = backstepping_control(static_field, 0.0, x, np.zeros(2), K=1.5)
    np.testing.assert_allclose(command.u, 1.5 * static_field.vector_field(0.0, x))


def test_backstepping_on_the_manifold_is_pure_feedforward(moving_field):
    t, x = 5.0, np.array([4.0, 1.5])
    k = moving_field.vector_field(t, x)
    command = backstepping_control(moving_field, t, x, k, K=4.0)
    expected = moving_field.beta * (moving_field.rho_grad_dt(t, x) + hessian_times(moving_field, t, x, k))
    np.testing.assert_allclose(command.u, expected, rtol=1e-10, atol=1e-14)


def test_sfm_driving_force_without_neighbors():
    params = SFMParams()
    command = sfm_control([0.0, 0.0], [0.0, 0.0], 0.75, [], params, [10.0, 0.0])
    np.testing.assert_allclose(command.u, [2.0, 0.0])
    near = sfm_control([9.5, 0.0], [0.0, 0.0], 0.75, [], params, [10.0, 0.0])
    np.testing.assert_allclose(near.u, [1.0, 0.0])


def test_sfm_ignores_distant_neighbors():
    params = SFMParams()
    far = [Neighbor(np.array([5.0, 0.0]), np.zeros(2), 0.75)]
    alone = sfm_control([0.0, 0.0], [0.2, 0.0], 0.75, [], params, [10.0, 0.0])
    crowded = sfm_control([0.0, 0.0], [0.2, 0.0], 0.75, far, params, [10.0, 0.0])
    np.testing.assert_allclose(crowded.u, alone.u)


def test_sfm_touching_agents_feel_the_interaction_strength():
    params = SFMParams()
    neighbor = [Neighbor(np.array([1.5, 0.0]), np.zeros(2), 0.75)]
    alone = sfm_control([0.0, 0.0], [0.0, 0.0], 0.75, [], params, [10.0, 0.0])
    command = sfm_control([0.0, 0.0], [0.0, 0.0], 0.75, neighbor, params, [10.0, 0.0])
    np.testing.assert_allclose(command.u - alone.u, [-params.A, 0.0])


def test_sfm_overlapping_agents_follow_the_contact_law():
    params = SFMParams()
    neighbor = [Neighbor(np.array([0.0, 1.4]), np.zeros(2), 0.75)]
    alone = sfm_control([0.0, 0.0], [0.0, 0.0], 0.75, [], params, [10.0, 0.0])
    command = sfm_control([0.0, 0.0], [0.0, 0.0], 0.75, neighbor, params, [10.0, 0.0])
    expected = params.A * math.exp(0.1 / params.B) + params.kappa1 * 0.1
    np.testing.assert_allclose(command.u - alone.u, [0.0, -expected], rtol=1e-12)
    assert expected > params.max_repulsion


def test_sfm_coincident_agents_warn(caplog):
    params = SFMParams()
    neighbor = [Neighbor(np.array([1.0, 1.0]), np.zeros(2), 0.75)]
    with caplog.at_level(logging.WARNING, logger="densitynav.control"):
        command = sfm_control([1.0, 1.0], [0.0, 0.0], 0.75, neighbor, params, [10.0, 0.0])
    assert np.all(np.isfinite(command.u))
    assert "coincident" in caplog.text


def test_inverse_dynamics_compensates_gravity_at_rest():
    model = TwoLinkArm()
    q = np.array([0.3, -0.7])
    torque = arm_inverse_dynamics(model, q, np.zeros(2), q, np.zeros(2), np.zeros(2), 1.0, 10.0)
    np.testing.assert_allclose(torque, gravity_forces(model, q))
