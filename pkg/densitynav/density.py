"""Navigation density fields.

rho(t, x) = Psi(t, x) / V_1(t, x)^alpha, where Psi is the product of the
obstacles' inverse bumps and V_1 = V + kappa is a regularized distance to the
target. Every evaluator is analytic and vectorized over the leading axes of x.

Product-of-bumps derivatives use the logarithmic product rule; each factor is
bounded below by its theta, so the quotients are well defined everywhere.
"""

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np

from .model.agent_spec import AgentSpec
from .model.bump_shape import BumpShape, ObstacleSpec
from .model.field_mode import FieldMode
from .smoothfn import bump_derivatives, validate_shape
from .trajectories import Trajectory, snapshot
from .utils import wrap_angle

logger = logging.getLogger(__name__)

DEFAULT_KAPPA = 1.0
DEFAULT_DELTA = 1e-3


class DomainError(ValueError):
    """Evaluation requested inside the excluded ball around the target."""


class FieldEval(NamedTuple):
    rho: np.ndarray
    grad: np.ndarray
    hess_diag: np.ndarray
    dt: np.ndarray
    grad_dt: np.ndarray | None = None


class PsiEval(NamedTuple):
    value: np.ndarray
    grad: np.ndarray
    hess_diag: np.ndarray
    dt: np.ndarray
    grad_dt: np.ndarray | None = None


class DivergenceTerms(NamedTuple):
    """Grouped divergence: div(k rho) = prefactor * sum_j (q1 + q2 + q3 + q4) [+ feedforward]."""

    prefactor: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    q4: np.ndarray
    feedforward: np.ndarray

    def total(self) -> np.ndarray:
        inner = np.sum(self.q1 + self.q2 + self.q3 + self.q4, axis=-1)
        return self.prefactor * inner + self.feedforward


class DistanceFn(ABC):
    """Distance-to-target V(t, x) with the derivatives the field needs."""

    kind: str = ""

    def __init__(self, target: Trajectory, kappa: float = DEFAULT_KAPPA):
        if kappa <= 0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        self.target = target
        self.kappa = float(kappa)

    @property
    def is_time_invariant(self) -> bool:
        return self.target.is_static

    def offset(self, t: float, x) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.target.position(t)

    @abstractmethod
    def value(self, t: float, x) -> np.ndarray: ...

    @abstractmethod
    def grad(self, t: float, x) -> np.ndarray: ...

    @abstractmethod
    def hess_diag(self, t: float, x) -> np.ndarray: ...

    @abstractmethod
    def hess_times(self, t: float, x, direction) -> np.ndarray:
        """Hessian of V applied to a vector, batched."""

    def dt(self, t: float, x) -> np.ndarray:
        """dV/dt = -<grad V, x_T'(t)> (V depends on x - x_T(t) only)."""
        return -np.sum(self.grad(t, x) * self.target.velocity(t), axis=-1)

    def grad_dt(self, t: float, x) -> np.ndarray:
        velocity = np.broadcast_to(self.target.velocity(t), np.shape(x))
        return -self.hess_times(t, x, velocity)


class QuadraticDistance(DistanceFn):
    """V(t, x) = ||x - x_T(t)||^2."""

    def __init__(self, target: Trajectory, kappa: float = DEFAULT_KAPPA):
        super().__init__(target, kappa)
        self.kind = "quadratic-to-point" if target.is_static else "quadratic-to-trajectory"

    def value(self, t, x):
        e = self.offset(t, x)
        return np.sum(e * e, axis=-1)

    def grad(self, t, x):
        return 2.0 * self.offset(t, x)

    def hess_diag(self, t, x):
        return np.full(np.shape(x), 2.0)

    def hess_times(self, t, x, direction):
        return 2.0 * np.asarray(direction, dtype=float)


class ReciprocalDistance(DistanceFn):
    """V(t, x) = 1 / ||x - x_T(t)||^2, the literal multi-agent form (kept for comparison runs)."""

    kind = "reciprocal-to-point"
    EPS = 1e-12

    def _parts(self, t, x):
        e = self.offset(t, x)
        d2 = np.maximum(np.sum(e * e, axis=-1), self.EPS)
        return e, d2

    def value(self, t, x):
        _, d2 = self._parts(t, x)
        return 1.0 / d2

    def grad(self, t, x):
        e, d2 = self._parts(t, x)
        return -2.0 * e / (d2**2)[..., None]

    def hess_diag(self, t, x):
        e, d2 = self._parts(t, x)
        return -2.0 / (d2**2)[..., None] + 8.0 * e * e / (d2**3)[..., None]

    def hess_times(self, t, x, direction):
        e, d2 = self._parts(t, x)
        direction = np.asarray(direction, dtype=float)
        projected = np.sum(e * direction, axis=-1)
        return (
            -2.0 * direction / (d2**2)[..., None]
            + 8.0 * e * (projected / d2**3)[..., None]
        )


class JointCosineDistance(DistanceFn):
    """V_q(t, q) = sum_i (1 - cos(q_i - q_Ti(t)))^2 with the offset wrapped to (-pi, pi]."""

    kind = "joint-cosine"

    def offset(self, t, x):
        return wrap_angle(super().offset(t, x))

    def value(self, t, x):
        return np.sum((1.0 - np.cos(self.offset(t, x))) ** 2, axis=-1)

    def grad(self, t, x):
        qbar = self.offset(t, x)
        return 2.0 * (1.0 - np.cos(qbar)) * np.sin(qbar)

    def hess_diag(self, t, x):
        qbar = self.offset(t, x)
        c = np.cos(qbar)
        return 2.0 * (np.sin(qbar) ** 2 + (1.0 - c) * c)

    def hess_times(self, t, x, direction):
        return self.hess_diag(t, x) * np.asarray(direction, dtype=float)


class DensityField:
    """Composed navigation density Psi / (V + kappa)^alpha with gain beta."""

    def __init__(
        self,
        obstacles: Sequence[ObstacleSpec],
        distance: DistanceFn,
        alpha: float,
        beta: float,
        mode: FieldMode | None = None,
    ):
        if alpha <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        if beta < 0:
            raise ValueError(f"beta must be non-negative, got {beta}")
        for obstacle in obstacles:
            validate_shape(obstacle.shape)
        self.obstacles = tuple(obstacles)
        self.distance = distance
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.mode = self._resolve_mode(mode)

    def _resolve_mode(self, mode: FieldMode | None) -> FieldMode:
        obstacles_static = all(o.center.is_static for o in self.obstacles)
        target_static = self.distance.is_time_invariant
        if mode is None:
            if obstacles_static and target_static:
                return FieldMode.STATIC
            if target_static:
                return FieldMode.DYNAMIC_OBSTACLE
            if obstacles_static:
                return FieldMode.DYNAMIC_TARGET
            raise ValueError("obstacles and target cannot both move in one field")
        if mode is FieldMode.DYNAMIC_OBSTACLE and not target_static:
            raise ValueError("dynamic-obstacle fields need a time-invariant target")
        if mode is FieldMode.DYNAMIC_TARGET and not obstacles_static:
            raise ValueError("dynamic-target fields need static obstacle centers")
        if mode is FieldMode.STATIC and not (obstacles_static and target_static):
            raise ValueError("static fields need static obstacles and target")
        return mode

    @property
    def kappa(self) -> float:
        return self.distance.kappa

    @property
    def dim(self) -> int:
        return self.distance.target.dim

    def target_position(self, t: float) -> np.ndarray:
        return self.distance.target.position(t)

    def target_velocity(self, t: float) -> np.ndarray:
        return self.distance.target.velocity(t)

    def psi(self, t: float, x, with_grad_dt: bool = False) -> PsiEval:
        """Product of inverse bumps with derivatives (log product rule)."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        value = np.ones(batch)
        sum_a = np.zeros(x.shape)
        sum_a2 = np.zeros(x.shape)
        sum_b = np.zeros(x.shape)
        sum_c = np.zeros(batch)
        sum_d = np.zeros(x.shape) if with_grad_dt else None
        for obstacle in self.obstacles:
            k = bump_derivatives(obstacle, t, x, with_grad_dt=with_grad_dt)
            a = k.grad / k.value[..., None]
            c = k.dt / k.value
            value = value * k.value
            sum_a += a
            sum_a2 += a * a
            sum_b += k.hess_diag / k.value[..., None]
            sum_c += c
            if with_grad_dt:
                sum_d += k.grad_dt / k.value[..., None] - a * c[..., None]
        grad = value[..., None] * sum_a
        hess_diag = value[..., None] * (sum_a**2 - sum_a2 + sum_b)
        dt = value * sum_c
        grad_dt = None
        if with_grad_dt:
            grad_dt = dt[..., None] * sum_a + value[..., None] * sum_d
        return PsiEval(value, grad, hess_diag, dt, grad_dt)

    def evaluate(self, t: float, x, with_grad_dt: bool = False) -> FieldEval:
        """rho with gradient, Hessian diagonal, time derivative (and d/dt grad)."""
        x = np.asarray(x, dtype=float)
        psi = self.psi(t, x, with_grad_dt)
        alpha = self.alpha
        dist = self.distance
        v1 = dist.value(t, x) + dist.kappa
        v_grad = dist.grad(t, x)
        w = v1**-alpha
        w_grad = (-alpha * w / v1)[..., None] * v_grad
        w_hess = (-alpha * w / v1)[..., None] * dist.hess_diag(t, x) + (
            alpha * (alpha + 1.0) * w / v1**2
        )[..., None] * v_grad**2

        rho = psi.value * w
        grad = w[..., None] * psi.grad + psi.value[..., None] * w_grad
        hess = (
            w[..., None] * psi.hess_diag
            + 2.0 * psi.grad * w_grad
            + psi.value[..., None] * w_hess
        )
        if dist.is_time_invariant:
            v_t = np.zeros_like(v1)
        else:
            v_t = dist.dt(t, x)
        w_t = -alpha * w * v_t / v1
        dt = w * psi.dt + psi.value * w_t

        grad_dt = None
        if with_grad_dt:
            if dist.is_time_invariant:
                w_grad_dt = np.zeros_like(grad)
            else:
                w_grad_dt = (alpha * (alpha + 1.0) * w * v_t / v1**2)[..., None] * v_grad - (
                    alpha * w / v1
                )[..., None] * dist.grad_dt(t, x)
            grad_dt = (
                w[..., None] * psi.grad_dt
                + w_t[..., None] * psi.grad
                + psi.dt[..., None] * w_grad
                + psi.value[..., None] * w_grad_dt
            )
        return FieldEval(rho, grad, hess, dt, grad_dt)

    def rho(self, t: float, x):
        """Density value; a float for a single point."""
        value = self.psi(t, x).value * (
            self.distance.value(t, x) + self.distance.kappa
        ) ** -self.alpha
        return value if np.ndim(value) else float(value)

    def rho_grad(self, t: float, x) -> np.ndarray:
        """Analytic spatial gradient of rho."""
        return self.evaluate(t, x).grad

    def rho_hess_diag(self, t: float, x) -> np.ndarray:
        return self.evaluate(t, x).hess_diag

    def rho_dt(self, t: float, x):
        """Partial time derivative of rho; zero for a static field."""
        if self.mode is FieldMode.STATIC:
            dt = np.zeros(np.shape(x)[:-1])
        else:
            dt = self.evaluate(t, x).dt
        return dt if np.ndim(dt) else float(dt)

    def rho_grad_dt(self, t: float, x) -> np.ndarray:
        """Analytic d/dt of grad rho at fixed x."""
        return self.evaluate(t, x, with_grad_dt=True).grad_dt

    def vector_field(self, t: float, x) -> np.ndarray:
        """Closed-loop velocity k(t, x) = beta grad rho (+ x_T' for a moving target)."""
        k = self.beta * self.rho_grad(t, x)
        if self.mode is FieldMode.DYNAMIC_TARGET:
            k = k + self.target_velocity(t)
        return k

    def check_domain(self, t: float, x, delta: float = DEFAULT_DELTA) -> None:
        distance = np.linalg.norm(self.distance.offset(t, x), axis=-1)
        if np.any(distance < delta):
            raise DomainError(
                f"point(s) within delta={delta} of the target; divergence is only "
                "evaluated on the complement of that ball"
            )

    def divergence_terms(self, t: float, x) -> DivergenceTerms:
        x = np.asarray(x, dtype=float)
        alpha = self.alpha
        psi = self.psi(t, x)
        dist = self.distance
        v1 = (dist.value(t, x) + dist.kappa)[..., None]
        v_grad = dist.grad(t, x)
        v_hess = dist.hess_diag(t, x)
        p = psi.value[..., None]
        q1 = (2.0 * alpha + 1.0) * p**2 * v_grad**2 / v1**2
        q2 = -4.0 * p * psi.grad * v_grad / v1
        q3 = -(p**2) * v_hess / v1
        q4 = (p * psi.hess_diag + psi.grad**2) / alpha
        prefactor = alpha * self.beta * v1[..., 0] ** (-2.0 * alpha)
        if self.mode is FieldMode.DYNAMIC_TARGET:
            feedforward = np.sum(self.target_velocity(t) * self.rho_grad(t, x), axis=-1)
        else:
            feedforward = np.zeros(x.shape[:-1])
        return DivergenceTerms(prefactor, q1, q2, q3, q4, feedforward)

    def divergence_k_rho(self, t: float, x, delta: float = DEFAULT_DELTA):
        """div(k rho) for the matched gradient law, on the complement of B_delta(target)."""
        self.check_domain(t, x, delta)
        total = self.divergence_terms(t, x).total()
        return total if np.ndim(total) else float(total)

    def local_stability_radius(self) -> float:
        """Radius inside which the obstacle-free divergence is non-positive.

        For V = ||x - x_T||^2 the obstacle-free divergence is proportional to
        (4 alpha + 2 - n) ||e||^2 - n kappa; it is infinite when the bracket
        can never turn positive.
        """
        n = self.dim
        denominator = 4.0 * self.alpha + 2.0 - n
        if denominator <= 0:
            return math.inf
        return math.sqrt(n * self.kappa / denominator)

    def with_beta(self, beta: float) -> "DensityField":
        """Same field with another gain."""
        return DensityField(self.obstacles, self.distance, self.alpha, beta, self.mode)


def effective_shape(agents: Sequence[AgentSpec], j: int, k: int, inflate: bool) -> BumpShape:
    """Bump geometry under which agent j perceives agent k."""
    other = agents[k]
    pad = agents[j].radius if inflate else 0.0
    return BumpShape(other.theta, other.radius + pad, other.sensing_radius + pad)


def neighbors_in_range(
    agents: Sequence[AgentSpec], j: int, positions, inflate: bool = True
) -> list[int]:
    """Agents whose sensing band reaches agent j; the rest contribute Psi_k = 1 exactly."""
    positions = np.asarray(positions, dtype=float)
    found = []
    for k in range(len(agents)):
        if k == j:
            continue
        shape = effective_shape(agents, j, k, inflate)
        if np.linalg.norm(positions[j] - positions[k]) < shape.s:
            found.append(k)
    return found


def multiagent_field(
    agents: Sequence[AgentSpec],
    j: int,
    t: float,
    positions,
    velocities=None,
    environment: Sequence[ObstacleSpec] = (),
    inflate: bool = True,
    reciprocal_distance: bool = False,
) -> DensityField:
    """Density of agent j with every neighbor in range encoded as a moving obstacle."""
    positions = np.asarray(positions, dtype=float)
    if velocities is None:
        velocities = np.zeros_like(positions)
    velocities = np.asarray(velocities, dtype=float)
    agent = agents[j]
    obstacles = list(environment)
    for k in neighbors_in_range(agents, j, positions, inflate):
        obstacles.append(
            ObstacleSpec(
                shape=effective_shape(agents, j, k, inflate),
                center=snapshot(positions[k], velocities[k], t),
                name=agents[k].name,
            )
        )
    distance_type = ReciprocalDistance if reciprocal_distance else QuadraticDistance
    distance = distance_type(agent.target, agent.kappa)
    return DensityField(obstacles, distance, agent.alpha, agent.beta, FieldMode.DYNAMIC_OBSTACLE)


def multiagent_rho(
    agents: Sequence[AgentSpec],
    j: int,
    t: float,
    positions,
    velocities=None,
    inflate: bool = True,
    reciprocal_distance: bool = False,
) -> tuple[float, np.ndarray]:
    """Value and gradient of agent j's density at its own position."""
    field = multiagent_field(
        agents,
        j,
        t,
        positions,
        velocities,
        inflate=inflate,
        reciprocal_distance=reciprocal_distance,
    )
    x_j = np.asarray(positions, dtype=float)[j]
    evaluation = field.evaluate(t, x_j)
    return float(evaluation.rho), evaluation.grad
