"""Planar two-link arm: dynamics, kinematics and configuration-space obstacles.

Point masses m1, m2 sit at the elbow and the end effector, gravity acts along -y:

    M11 = (m1 + m2) l1^2 + m2 l2^2 + 2 m2 l1 l2 cos q2
    M12 = m2 l2^2 + m2 l1 l2 cos q2
    M22 = m2 l2^2
    C   = m2 l1 l2 sin q2 [-(2 q1' q2' + q2'^2), q1'^2]
    G   = g [(m1 + m2) l1 cos q1 + m2 l2 cos(q1 + q2), m2 l2 cos(q1 + q2)]

and M(q) q'' + H(q, q') = u with H = C + G. Single and double integrators and the
unicycle need no model object; the simulator integrates them directly.
"""

import logging
import math
from collections.abc import Sequence

import numpy as np
from scipy import ndimage
from scipy.cluster.hierarchy import DisjointSet
from scipy.integrate import solve_ivp
from scipy.spatial import ConvexHull, QhullError

from .density import DensityField, JointCosineDistance
from .model.bump_shape import BumpShape, ObstacleSpec
from .model.field_mode import FieldMode
from .model.two_link_arm import JointDensitySpec, JointPlan, TwoLinkArm
from .smoothfn import clearance
from .trajectories import StaticPoint, Trajectory
from .utils import wrap_angle

logger = logging.getLogger(__name__)

DEFAULT_GRID_RESOLUTION = 180
OBSTACLE_INFLATION = 1.1
DEFAULT_SENSING_MARGIN = 0.5
PLAN_RTOL = 1e-6
PLAN_ATOL = 1e-9
MAX_JOINT_CIRCLE_RADIUS = 0.35


class PlanViolationError(RuntimeError):
    """The joint-space plan entered a configuration-space obstacle."""

    def __init__(self, t: float, obstacle: str):
        super().__init__(f"motion plan entered obstacle '{obstacle}' at t={t:.3f} s")
        self.t = t
        self.obstacle = obstacle


class InfeasibleWorkspaceError(RuntimeError):
    """Every configuration on the grid collides."""


class PlanIntegrationError(RuntimeError):
    """The ODE solver gave up on the joint-space gradient flow."""


def mass_matrix(model: TwoLinkArm, q) -> np.ndarray:
    m1, m2, l1, l2, _ = model
    c2 = math.cos(q[1])
    m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2
    return np.array(
        [
            [(m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2, m12],
            [m12, m2 * l2 * l2],
        ]
    )


def coriolis_forces(model: TwoLinkArm, q, qdot) -> np.ndarray:
    _, m2, l1, l2, _ = model
    h = m2 * l1 * l2 * math.sin(q[1])
    return np.array(
        [-h * (2.0 * qdot[0] * qdot[1] + qdot[1] ** 2), h * qdot[0] ** 2]
    )


def gravity_forces(model: TwoLinkArm, q) -> np.ndarray:
    m1, m2, l1, l2, g = model
    c1 = math.cos(q[0])
    c12 = math.cos(q[0] + q[1])
    return np.array(
        [(m1 + m2) * g * l1 * c1 + m2 * g * l2 * c12, m2 * g * l2 * c12]
    )


def bias_forces(model: TwoLinkArm, q, qdot) -> np.ndarray:
    """H(q, q') = Coriolis/centrifugal + gravity."""
    return coriolis_forces(model, q, qdot) + gravity_forces(model, q)


def arm_dynamics(model: TwoLinkArm, q, qdot, torque) -> np.ndarray:
    """q'' = M(q)^-1 (u - H(q, q'))."""
    rhs = np.asarray(torque, dtype=float) - bias_forces(model, q, qdot)
    return np.linalg.solve(mass_matrix(model, q), rhs)


def kinetic_energy(model: TwoLinkArm, q, qdot) -> float:
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * float(qdot @ mass_matrix(model, q) @ qdot)


def arm_fk(model: TwoLinkArm, q) -> tuple[np.ndarray, np.ndarray]:
    """Elbow and end-effector positions; q may be batched with shape (..., 2)."""
    q = np.asarray(q, dtype=float)
    q1 = q[..., 0]
    q12 = q1 + q[..., 1]
    elbow = np.stack([model.l1 * np.cos(q1), model.l1 * np.sin(q1)], axis=-1)
    end = elbow + np.stack([model.l2 * np.cos(q12), model.l2 * np.sin(q12)], axis=-1)
    return elbow, end


def arm_jacobian(model: TwoLinkArm, q) -> np.ndarray:
    """End-effector Jacobian d(x, y)/d(q1, q2)."""
    s1, c1 = math.sin(q[0]), math.cos(q[0])
    s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
    return np.array(
        [
            [-model.l1 * s1 - model.l2 * s12, -model.l2 * s12],
            [model.l1 * c1 + model.l2 * c12, model.l2 * c12],
        ]
    )


def arm_ik(model: TwoLinkArm, point, elbow: int = -1) -> np.ndarray:
    """Closed-form inverse kinematics; `elbow` picks the sign of q2.

    Points out of reach are projected onto the reachable annulus.
    """
    x, y = float(point[0]), float(point[1])
    l1, l2 = model.l1, model.l2
    cos_q2 = (x * x + y * y - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    q2 = math.copysign(math.acos(min(1.0, max(-1.0, cos_q2))), elbow)
    q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return np.array([q1, q2])


class JointTargetTrajectory(Trajectory):
    """Joint reference q_T(t) that places the end effector on a task-space curve."""

    kind = "joint-target"

    def __init__(self, model: TwoLinkArm, task_target: Trajectory, elbow: int = -1):
        self.model = model
        self.task_target = task_target
        self.elbow = elbow

    def position(self, t: float) -> np.ndarray:
        return arm_ik(self.model, self.task_target.position(t), self.elbow)

    def velocity(self, t: float) -> np.ndarray:
        q = self.position(t)
        return np.linalg.solve(arm_jacobian(self.model, q), self.task_target.velocity(t))

    @property
    def is_static(self) -> bool:
        return self.task_target.is_static


def _segment_distance(start: np.ndarray, end: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Distance from a point to each segment start -> end (batched over leading axes)."""
    seg = end - start
    length2 = np.maximum(np.sum(seg * seg, axis=-1), 1e-300)
    s = np.clip(np.sum((point - start) * seg, axis=-1) / length2, 0.0, 1.0)
    closest = start + s[..., None] * seg
    return np.linalg.norm(point - closest, axis=-1)


def link_clearance(model: TwoLinkArm, q, center, radius: float) -> np.ndarray:
    """Smallest distance from either link to a task-space circle, minus its radius."""
    elbow, end = arm_fk(model, q)
    base = np.zeros_like(elbow)
    center = np.asarray(center, dtype=float)
    d1 = _segment_distance(base, elbow, center)
    d2 = _segment_distance(elbow, end, center)
    return np.minimum(d1, d2) - radius


def joint_grid(resolution: int) -> np.ndarray:
    """Axis samples -pi + 2 pi i / N, i = 0..N-1 (periodic)."""
    return -math.pi + 2.0 * math.pi * np.arange(resolution) / resolution


def collision_mask(
    model: TwoLinkArm, circles: Sequence[tuple], resolution: int = DEFAULT_GRID_RESOLUTION
) -> np.ndarray:
    """Boolean (N, N) grid, axis 0 = q1, axis 1 = q2; True where a link meets a circle."""
    axis = joint_grid(resolution)
    q = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
    mask = np.zeros((resolution, resolution), dtype=bool)
    for center, radius in circles:
        mask |= link_clearance(model, q, center, radius) < 0.0
    return mask


def _periodic_components(mask: np.ndarray) -> list[np.ndarray]:
    """Connected colliding regions on the torus, as arrays of (i, j) grid indices."""
    labels, count = ndimage.label(mask)
    if count == 0:
        return []
    groups = DisjointSet(range(1, count + 1))
    for i in range(mask.shape[0]):
        if labels[i, 0] and labels[i, -1]:
            groups.merge(int(labels[i, 0]), int(labels[i, -1]))
    for j in range(mask.shape[1]):
        if labels[0, j] and labels[-1, j]:
            groups.merge(int(labels[0, j]), int(labels[-1, j]))
    return [
        np.concatenate([np.argwhere(labels == label) for label in sorted(subset)])
        for subset in sorted(groups.subsets(), key=min)
    ]


def _unwrap_indices(indices: np.ndarray, size: int) -> np.ndarray:
    """Shift indices across the seam so the component is contiguous along each axis."""
    unwrapped = indices.copy()
    for axis in range(indices.shape[1]):
        occupied = np.unique(indices[:, axis])
        if len(occupied) == size:
            logger.warning("collision region wraps around joint %d", axis + 1)
            continue
        gaps = np.diff(np.append(occupied, occupied[0] + size))
        start = occupied[(np.argmax(gaps) + 1) % len(occupied)]
        unwrapped[:, axis] = np.where(indices[:, axis] < start, indices[:, axis] + size, indices[:, axis])
    return unwrapped


def _circle_two(a, b):
    center = (a + b) / 2.0
    return center, float(np.linalg.norm(a - center))


def _circle_three(a, b, c):
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    if abs(d) < 1e-14:
        pairs = [(a, b), (a, c), (b, c)]
        return max((_circle_two(p, q) for p, q in pairs), key=lambda circle: circle[1])
    sa, sb, sc = a @ a, b @ b, c @ c
    ux = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d
    uy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(a - center))


def _inside(circle, point, tol: float = 1e-10) -> bool:
    return float(np.linalg.norm(point - circle[0])) <= circle[1] + tol


def minimal_enclosing_circle(points: np.ndarray, seed: int = 0) -> tuple[np.ndarray, float]:
    """Smallest circle containing all points (randomized incremental construction)."""
    points = np.asarray(points, dtype=float)
    if len(points) >= 3:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass
    points = points[np.random.default_rng(seed).permutation(len(points))]
    circle = (points[0].copy(), 0.0)
    for i in range(1, len(points)):
        if _inside(circle, points[i]):
            continue
        circle = (points[i].copy(), 0.0)
        for j in range(i):
            if _inside(circle, points[j]):
                continue
            circle = _circle_two(points[i], points[j])
            for k in range(j):
                if not _inside(circle, points[k]):
                    circle = _circle_three(points[i], points[j], points[k])
    return circle


def _cover_points(points: np.ndarray, max_radius: float) -> list[tuple[np.ndarray, float]]:
    """Enclosing circles for a point cloud, halved along its long axis until each is small."""
    center, radius = minimal_enclosing_circle(points)
    if radius <= max_radius or len(points) < 4:
        return [(center, radius)]
    centered = points - points.mean(axis=0)
    _, _, axes = np.linalg.svd(centered, full_matrices=False)
    order = np.argsort(centered @ axes[0], kind="stable")
    half = len(points) // 2
    return _cover_points(points[order[:half]], max_radius) + _cover_points(
        points[order[half:]], max_radius
    )


def workspace_to_joint_obstacles(
    model: TwoLinkArm,
    circles: Sequence[tuple],
    resolution: int = DEFAULT_GRID_RESOLUTION,
    max_radius: float = MAX_JOINT_CIRCLE_RADIUS,
) -> list[tuple[np.ndarray, float]]:
    """Circles in q-space covering every grid configuration that hits a task-space circle.

    Each connected collision region is split until its enclosing circles have radius
    at most `max_radius`; long thin regions would otherwise swallow free space.
    """
    mask = collision_mask(model, circles, resolution)
    if mask.all():
        raise InfeasibleWorkspaceError("every grid configuration collides with an obstacle")
    cell = 2.0 * math.pi / resolution
    result = []
    for indices in _periodic_components(mask):
        unwrapped = _unwrap_indices(indices, resolution)
        points = -math.pi + cell * unwrapped.astype(float)
        for center, radius in _cover_points(points, max_radius):
            result.append((center, (radius + cell * math.sqrt(0.5)) * OBSTACLE_INFLATION))
    logger.info(
        "mapped %d task-space obstacle(s) to %d configuration-space circle(s)",
        len(circles),
        len(result),
    )
    return result


def _periodic_offsets():
    step = 2.0 * math.pi
    return [np.array([a, b]) for a in (-step, 0.0, step) for b in (-step, 0.0, step)]


def joint_obstacle_coverage(
    circles: Sequence[tuple[np.ndarray, float]], mask: np.ndarray
) -> float:
    """Fraction of colliding grid configurations inside some circle (or a periodic copy)."""
    colliding = np.argwhere(mask)
    if len(colliding) == 0:
        return 1.0
    axis = joint_grid(mask.shape[0])
    points = axis[colliding]
    covered = np.zeros(len(points), dtype=bool)
    for center, radius in circles:
        for offset in _periodic_offsets():
            covered |= np.linalg.norm(points - (center + offset), axis=1) <= radius
    return float(covered.mean())


def joint_obstacle_specs(
    circles: Sequence[tuple[np.ndarray, float]],
    theta: float,
    sensing_margin: float = DEFAULT_SENSING_MARGIN,
) -> list[ObstacleSpec]:
    """Bump obstacles for q-space circles, replicated over the 2 pi periodic images.

    Only images whose sensing disc can reach the principal box [-pi, pi]^2 are kept;
    the plan is integrated on wrapped angles so nothing outside the box is visited.
    """
    specs = []
    for index, (center, radius) in enumerate(circles):
        shape = BumpShape(theta, radius, radius + sensing_margin)
        for offset in _periodic_offsets():
            image = np.asarray(center, dtype=float) + offset
            if np.all(np.abs(image) <= math.pi + shape.s):
                specs.append(ObstacleSpec(shape, StaticPoint(image), f"q{index}"))
    return specs


def joint_density_field(spec: JointDensitySpec) -> DensityField:
    distance = JointCosineDistance(spec.target, spec.kappa)
    return DensityField(spec.obstacles, distance, spec.alpha, spec.beta)


def joint_motion_plan(
    spec: JointDensitySpec, q0, horizon: float, dt: float = 0.01
) -> JointPlan:
    """Integrate the joint-space gradient flow and sample q_d with derivatives.

    The field is evaluated at wrapped angles while q itself is integrated in
    continuous coordinates, so the reference never jumps when a joint passes
    through +-pi. The solver's step is bounded by ``dt`` and adapts below it
    where the sensing band is stiff.
    """
    field = joint_density_field(spec)
    feedforward = spec.feedforward and field.mode is FieldMode.DYNAMIC_TARGET

    def flow(t, q):
        velocity = field.beta * field.rho_grad(t, wrap_angle(q))
        if feedforward:
            velocity = velocity + field.target_velocity(t)
        return velocity

    steps = int(round(horizon / dt))
    t = dt * np.arange(steps + 1)
    start = np.asarray(q0, dtype=float)
    for obstacle in spec.obstacles:
        if clearance(obstacle, 0.0, wrap_angle(start)) <= 0.0:
            raise PlanViolationError(0.0, obstacle.name)

    solution = solve_ivp(
        flow,
        (0.0, float(t[-1])),
        start,
        t_eval=t,
        max_step=dt,
        rtol=PLAN_RTOL,
        atol=PLAN_ATOL,
    )
    if not solution.success:
        raise PlanIntegrationError(solution.message)
    q = solution.y.T
    wrapped = wrap_angle(q)
    for ti, qi in zip(t, wrapped):
        for obstacle in spec.obstacles:
            if clearance(obstacle, ti, qi) <= 0.0:
                raise PlanViolationError(float(ti), obstacle.name)

    qdot = np.array([flow(ti, qi) for ti, qi in zip(t, q)])
    qddot = np.gradient(qdot, dt, axis=0)
    psi = np.array([float(field.psi(ti, qi).value) for ti, qi in zip(t, wrapped)])
    logger.info(
        "joint motion plan: %d samples over %.2f s (%d field evaluations)",
        steps + 1,
        horizon,
        solution.nfev,
    )
    return JointPlan(t=t, q=q, qdot=qdot, qddot=qddot, psi=psi)
