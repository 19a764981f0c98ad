"""Smooth transition functions and the inverse bump of a moving circular obstacle.

All evaluators broadcast over points: `x` may be a single point of shape (n,)
or a batch of shape (..., n); scalars in, scalars out for the 1-D helpers.

Below `TAU_FLOOR` the elementary function exp(-1/tau) is returned as exactly 0
together with all its derivatives. At tau = 0.005 the true value is e^-200,
far below anything that can change a sum with the other (order one) branch.
"""

from typing import NamedTuple

import numpy as np

from .model.bump_shape import BumpShape, ObstacleSpec

TAU_FLOOR = 0.005


class BumpEval(NamedTuple):
    """Inverse bump value and exact derivatives at a batch of points."""

    value: np.ndarray
    grad: np.ndarray
    hess_diag: np.ndarray
    dt: np.ndarray
    grad_dt: np.ndarray | None = None


def validate_shape(shape: BumpShape) -> BumpShape:
    """Reject theta outside (0, 1) and radii that do not satisfy 0 < r < s."""
    if not 0.0 < shape.theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {shape.theta}")
    if not 0.0 < shape.r < shape.s:
        raise ValueError(f"radii must satisfy 0 < r < s, got r={shape.r}, s={shape.s}")
    return shape


def _f_terms(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """f, f' and f'' of exp(-1/tau), zero at and below the floor."""
    tau = np.asarray(tau, dtype=float)
    live = tau > TAU_FLOOR
    safe = np.where(live, tau, 1.0)
    f = np.where(live, np.exp(-1.0 / safe), 0.0)
    f1 = f / safe**2
    f2 = f * (1.0 - 2.0 * safe) / safe**4
    return f, f1, f2


def elementary_f(tau):
    """exp(-1/tau) for tau > 0, else 0."""
    f, _, _ = _f_terms(tau)
    return f if np.ndim(tau) else float(f)


def _step_terms(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """g = f(tau) / (f(tau) + f(1 - tau)) and its first two derivatives."""
    a, a1, a2 = _f_terms(tau)
    b, b1, b2 = _f_terms(1.0 - np.asarray(tau, dtype=float))
    total = a + b
    # one of the two terms is always above e^-2 when the other is floored
    total = np.where(total > 0.0, total, 1.0)
    numerator = a1 * b + a * b1
    g = a / total
    g1 = numerator / total**2
    g2 = (a2 * b - a * b2) / total**2 - 2.0 * numerator * (a1 - b1) / total**3
    return g, g1, g2


def smooth_step(tau, theta: float):
    """(1 - theta) f(tau) / (f(tau) + f(1 - tau)) + theta, in [theta, 1]."""
    g, _, _ = _step_terms(tau)
    value = (1.0 - theta) * g + theta
    return value if np.ndim(tau) else float(value)


def smooth_step_derivatives(tau, theta: float):
    """Value, first and second derivative of `smooth_step` w.r.t. tau."""
    g, g1, g2 = _step_terms(tau)
    scale = 1.0 - theta
    return scale * g + theta, scale * g1, scale * g2


def _offsets(obstacle: ObstacleSpec, t: float, x) -> np.ndarray:
    return np.asarray(x, dtype=float) - obstacle.center.position(t)


def bump_derivatives(
    obstacle: ObstacleSpec, t: float, x, with_grad_dt: bool = False
) -> BumpEval:
    """Psi_k and its exact spatial/temporal derivatives at points x."""
    theta, r, s = obstacle.shape
    e = _offsets(obstacle, t, x)
    width = s * s - r * r
    tau = (np.sum(e * e, axis=-1) - r * r) / width
    value, d1, d2 = smooth_step_derivatives(tau, theta)

    dtau = 2.0 * e / width
    grad = d1[..., None] * dtau
    hess_diag = d2[..., None] * dtau**2 + (d1 * 2.0 / width)[..., None]

    center_velocity = obstacle.center.velocity(t)
    dt = -np.sum(grad * center_velocity, axis=-1)

    grad_dt = None
    if with_grad_dt:
        # -H c' with H = d2 dtau dtau^T + d1 (2 / width) I
        projected = np.sum(dtau * center_velocity, axis=-1)
        grad_dt = -(
            (d2 * projected)[..., None] * dtau
            + (d1 * 2.0 / width)[..., None] * center_velocity
        )
    return BumpEval(value, grad, hess_diag, dt, grad_dt)


def bump_value(obstacle: ObstacleSpec, t: float, x):
    """theta inside the obstacle, the smoothed step in the sensing band, 1 outside."""
    theta, r, s = obstacle.shape
    e = _offsets(obstacle, t, x)
    tau = (np.sum(e * e, axis=-1) - r * r) / (s * s - r * r)
    return smooth_step(tau, theta)


def bump_grad(obstacle: ObstacleSpec, t: float, x) -> np.ndarray:
    """Spatial gradient of one obstacle's inverse bump."""
    return bump_derivatives(obstacle, t, x).grad


def bump_hess_diag(obstacle: ObstacleSpec, t: float, x) -> np.ndarray:
    """Diagonal of the bump Hessian."""
    return bump_derivatives(obstacle, t, x).hess_diag


def bump_dt(obstacle: ObstacleSpec, t: float, x):
    """dPsi/dt = -<grad Psi, c'(t)>."""
    dt = bump_derivatives(obstacle, t, x).dt
    return dt if np.ndim(dt) else float(dt)


def in_sensing_band(obstacle: ObstacleSpec, t: float, x) -> np.ndarray:
    """True where r < ||x - c(t)|| < s."""
    _, r, s = obstacle.shape
    distance = np.linalg.norm(_offsets(obstacle, t, x), axis=-1)
    return (distance > r) & (distance < s)


def clearance(obstacle: ObstacleSpec, t: float, x) -> np.ndarray:
    """Distance to the unsafe-set boundary, ||x - c(t)|| - r (negative inside)."""
    return np.linalg.norm(_offsets(obstacle, t, x), axis=-1) - obstacle.shape.r
