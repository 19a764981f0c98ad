"""Feedback laws built on navigation densities, plus the social-force baseline.

Gradient law       u = beta grad rho (+ x_T'(t) for a moving target)
Saturation         u <- u * u_max / ||u||_inf when the bound is exceeded
Unicycle           v = ||u||, omega = d(delta~)/dt - K wrap(delta - delta~), delta~ = atan2(u_y, u_x)
Backstepping       u = d/dt(k) - K (v - k), k the gradient law
Inverse dynamics   tau = M(q)(q_d'' - Kp e - Kv e') + H(q, q')
"""

import logging
import math
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np

from .density import DensityField
from .model.control_command import (
    ControlCommand,
    SFMParams,
    UnicycleCommand,
    UnicycleState,
)
from .model.field_mode import FieldMode
from .model.two_link_arm import TwoLinkArm
from .robots import bias_forces, mass_matrix
from .utils import angle_difference, wrap_angle

logger = logging.getLogger(__name__)

HESSIAN_FD_STEP = 1e-5
DEGENERATE_SPEED = 1e-9
COINCIDENT_DISTANCE = 1e-12
SINGULAR_INERTIA_DET = 1e-12


class SingularInertiaError(RuntimeError):
    """Mass matrix not invertible at the requested configuration."""


def gradient_control(field: DensityField, t: float, x) -> ControlCommand:
    return ControlCommand(u=np.asarray(field.vector_field(t, x), dtype=float))


def saturate(command: ControlCommand, u_max: float) -> ControlCommand:
    """Scale u onto the infinity-norm ball of radius u_max, keeping its direction."""
    if u_max <= 0:
        raise ValueError(f"u_max must be positive, got {u_max}")
    u = np.asarray(command.u, dtype=float)
    peak = float(np.max(np.abs(u))) if u.size else 0.0
    if peak <= u_max:
        return command
    return ControlCommand(u=u * (u_max / peak), saturated=True)


def unicycle_control(
    state: UnicycleState,
    u_xy,
    K: float,
    d_delta_tilde_dt: float,
    previous_delta_tilde: float | None = None,
) -> UnicycleCommand:
    """Convert a planar velocity command into forward speed and turn rate."""
    if K <= 0:
        raise ValueError(f"K must be positive, got {K}")
    ux, uy = float(u_xy[0]), float(u_xy[1])
    speed = math.hypot(ux, uy)
    if speed < DEGENERATE_SPEED:
        held = state.delta if previous_delta_tilde is None else previous_delta_tilde
        return UnicycleCommand(v=0.0, omega=0.0, delta_tilde=wrap_angle(held))
    delta_tilde = math.atan2(uy, ux)
    omega = d_delta_tilde_dt - K * angle_difference(state.delta, delta_tilde)
    return UnicycleCommand(v=speed, omega=float(omega), delta_tilde=delta_tilde)


class HeadingReference:
    """Tracks delta~ across control steps and differentiates it (wrap-aware)."""

    def __init__(self, K: float):
        self.K = K
        self.previous: float | None = None

    def reset(self) -> None:
        self.previous = None

    def command(self, state: UnicycleState, u_xy, dt: float) -> UnicycleCommand:
        ux, uy = float(u_xy[0]), float(u_xy[1])
        rate = 0.0
        if self.previous is not None and math.hypot(ux, uy) >= DEGENERATE_SPEED:
            rate = angle_difference(math.atan2(uy, ux), self.previous) / dt
        command = unicycle_control(state, u_xy, self.K, rate, self.previous)
        self.previous = command.delta_tilde
        return command


def hessian_times(field: DensityField, t: float, x, direction) -> np.ndarray:
    """(grad^2 rho) @ direction by a central difference of the analytic gradient."""
    direction = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return np.zeros_like(direction)
    unit = direction / norm
    x = np.asarray(x, dtype=float)
    h = HESSIAN_FD_STEP
    forward = field.rho_grad(t, x + h * unit)
    backward = field.rho_grad(t, x - h * unit)
    return norm * (forward - backward) / (2.0 * h)


def backstepping_control(field: DensityField, t: float, x, v, K: float) -> ControlCommand:
    """Double-integrator law making v track the gradient law k = beta grad rho."""
    if K <= 0:
        raise ValueError(f"K must be positive, got {K}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    evaluation = field.evaluate(t, x, with_grad_dt=True)
    k = field.beta * evaluation.grad
    k_dot = field.beta * (evaluation.grad_dt + hessian_times(field, t, x, v))
    if field.mode is FieldMode.DYNAMIC_TARGET:
        k = k + field.target_velocity(t)
        k_dot = k_dot + field.distance.target.acceleration(t)
    return ControlCommand(u=k_dot - K * (v - k))


class Neighbor(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray
    radius: float


def sfm_control(
    position,
    velocity,
    radius: float,
    neighbors: Sequence[Neighbor],
    params: SFMParams,
    target,
) -> ControlCommand:
    """Social force: relaxation towards the desired velocity plus pairwise repulsion."""
    x = np.asarray(position, dtype=float)
    v = np.asarray(velocity, dtype=float)
    to_target = np.asarray(target, dtype=float) - x
    distance = float(np.linalg.norm(to_target))
    desired = np.zeros_like(x)
    if distance > 0.0:
        speed = params.desired_speed * min(1.0, distance / params.arrival_radius)
        desired = speed * to_target / distance
    force = (desired - v) / params.relaxation_time

    for neighbor in neighbors:
        offset = x - np.asarray(neighbor.position, dtype=float)
        d_ij = float(np.linalg.norm(offset))
        if d_ij > params.d_H:
            continue
        if d_ij < COINCIDENT_DISTANCE:
            logger.warning("coincident agents at %s; repulsion capped", x)
            normal = np.zeros_like(x)
            normal[0] = 1.0
            force = force + params.max_repulsion * normal
            continue
        normal = offset / d_ij
        overlap = radius + neighbor.radius - d_ij
        contact = max(overlap, 0.0)
        repulsion = (params.A * math.exp(overlap / params.B) + params.kappa1 * contact) * normal
        if x.shape[0] == 2 and contact > 0.0:
            tangent = np.array([-normal[1], normal[0]])
            slip = float(np.dot(np.asarray(neighbor.velocity, dtype=float) - v, tangent))
            repulsion = repulsion + params.kappa2 * contact * slip * tangent
        force = force + repulsion
    return ControlCommand(u=force)


def arm_inverse_dynamics(
    model: TwoLinkArm, q, qdot, q_d, qdot_d, qddot_d, Kp, Kv
) -> np.ndarray:
    """Computed-torque law; closes the loop to e'' + Kv e' + Kp e = 0."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    e = q - np.asarray(q_d, dtype=float)
    e_dot = qdot - np.asarray(qdot_d, dtype=float)
    M = mass_matrix(model, q)
    if abs(np.linalg.det(M)) < SINGULAR_INERTIA_DET:
        raise SingularInertiaError(f"mass matrix singular at q={q}")
    command = np.asarray(qddot_d, dtype=float) - np.asarray(Kp) * e - np.asarray(Kv) * e_dot
    return M @ command + bias_forces(model, q, qdot)
