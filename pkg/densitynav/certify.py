"""Numerical certification of a navigation density.

Every check here is sampled, not proven: bounds are maxima/minima over grids,
the convergence margin is a grid minimum and integrability is judged from a
fitted tail exponent.
"""

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .density import DensityField
from .model.certificate import (
    AlphaRange,
    AssumptionConstants,
    CertificateReport,
    Lemma1Result,
)
from .model.field_mode import FieldMode
from .scenario import ball_volume
from .smoothfn import in_sensing_band
from .worker_pool import WorkerPool

logger = logging.getLogger(__name__)

PSI_BOUND_INFLATION = 1.05
DEFAULT_GRID_POINTS = 200
DEFAULT_TIME_SAMPLES = 50
DEFAULT_RAYS = 16
TAIL_RADIUS_SPAN = 100.0
TAIL_SAMPLES_PER_RAY = 24
P2_ZERO_TOLERANCE = 1e-9
LIOUVILLE_EPS = 1e-12


class DegenerateConstantsError(ValueError):
    """The parameter-range formulas have no admissible solution."""


class FlowEscapeError(RuntimeError):
    """A transported sample left the workspace."""

    def __init__(self, index: int, point, t: float):
        super().__init__(f"sample {index} left the workspace at t={t:.4f} (x={np.round(point, 4).tolist()})")
        self.index = index
        self.point = np.asarray(point)
        self.t = t


class _Grid(NamedTuple):
    points: np.ndarray
    times: np.ndarray


def grid_points(lower, upper, points_per_axis: int) -> np.ndarray:
    """Regular grid over a box, flattened to shape (points_per_axis^n, n)."""
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def quadratic_root(p1: float, p2: float, p3: float) -> float:
    """Positive root of p1 a^2 + p2 a - p3 = 0."""
    if p2 == 0.0:
        return math.sqrt(p3 / p1)
    return (-p2 + math.sqrt(p2 * p2 + 4.0 * p1 * p3)) / (2.0 * p1)


def p_coefficients(constants: AssumptionConstants) -> tuple[float, float, float]:
    c = constants
    p1 = 2.0 * (c.dbar_V * c.cbar_x**2 + c.kappa) ** -2 * (c.dunder_Vx * c.cbar_x * c.theta) ** 2
    p2 = (
        p1 / 2.0
        - 4.0 * c.dbar_Vx * c.cbar_psi_x / (c.dunder_V * c.cbar_x)
        - c.dbar_Vxx / c.kappa
    )
    p3 = c.cbar_psi_xx
    return p1, p2, p3


def alpha_range(constants: AssumptionConstants) -> AlphaRange:
    """Lower bound on alpha: the larger of the in-band root and the outside-band bound."""
    p1, p2, p3 = p_coefficients(constants)
    if p1 <= 0.0:
        raise DegenerateConstantsError(f"p1 must be positive, got {p1}")
    c = constants
    root = quadratic_root(p1, p2, p3)
    dbar_v1 = c.dbar_V + c.kappa / c.cunder_x**2
    outside = (c.dbar_Vxx / c.dunder_V) / (2.0 * dbar_v1**-2 * (c.dunder_Vx * c.theta) ** 2) - 0.5
    return AlphaRange(max(root, outside), root, outside, p1, p2, p3)


def lemma1_L1(constants: AssumptionConstants, alpha: float) -> float:
    p1, p2, p3 = p_coefficients(constants)
    c = constants
    bracket = (2.0 * alpha + 1.0) * p1 / 2.0 - (p1 / 2.0 - p2) - p3 / alpha
    return alpha * c.dimension * bracket / (c.dbar_V * c.cbar_x**2)


def beta_range(constants: AssumptionConstants, alpha: float) -> float:
    """beta_min = c_psi_t / L1."""
    L1 = lemma1_L1(constants, alpha)
    if constants.c_psi_t == 0.0:
        return 0.0
    if L1 <= 0.0:
        raise DegenerateConstantsError(f"L1={L1:.4g} <= 0 at alpha={alpha}; alpha too small")
    return constants.c_psi_t / L1


def lemma3_lower_bound(field: DensityField, constants: AssumptionConstants, t: float, x) -> np.ndarray:
    """Pointwise analytic lower bound on div(k rho) built from the uniform constants."""
    c = constants
    alpha, beta = field.alpha, field.beta
    e = np.linalg.norm(field.distance.offset(t, x), axis=-1)
    w = (field.distance.value(t, x) + field.kappa) ** -alpha
    attract = (2 * alpha + 1) * c.theta**2 * c.dunder_Vx**2 * e**2 / (c.dbar_V * e**2 + c.kappa) ** 2
    cross = 4.0 * c.cbar_psi_x * c.dbar_Vx / (c.dunder_V * e)
    return alpha * beta * c.dimension * w**2 * (
        attract - cross - c.dbar_Vxx / c.kappa - c.cbar_psi_xx / alpha
    )


class Certifier:
    """Runs the sampled checks of one field over a box and a time window."""

    def __init__(
        self,
        field: DensityField,
        lower,
        upper,
        horizon: float,
        grid_points: int = DEFAULT_GRID_POINTS,
        time_samples: int = DEFAULT_TIME_SAMPLES,
        delta: float = 1e-3,
        exclude_local_ball: bool = False,
        rays: int = DEFAULT_RAYS,
        pool: WorkerPool | None = None,
    ):
        self.field = field
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.horizon = horizon
        self.grid_points = grid_points
        self.time_samples = time_samples
        self.delta = delta
        self.exclusion_radius = delta
        if exclude_local_ball:
            self.exclusion_radius = max(delta, field.local_stability_radius())
        self.rays = rays
        self.pool = pool or WorkerPool()

    def _grid(self) -> _Grid:
        times = np.linspace(0.0, self.horizon, self.time_samples)
        if self.field.mode is FieldMode.STATIC:
            times = times[:1]
        return _Grid(grid_points(self.lower, self.upper, self.grid_points), times)

    def _outside_exclusion(self, t: float, points: np.ndarray) -> np.ndarray:
        distance = np.linalg.norm(self.field.distance.offset(t, points), axis=-1)
        return distance >= self.exclusion_radius

    def _in_band(self, t: float, points: np.ndarray) -> np.ndarray:
        band = np.zeros(len(points), dtype=bool)
        for obstacle in self.field.obstacles:
            band |= in_sensing_band(obstacle, t, points)
        return band

    def estimate_constants(self) -> AssumptionConstants:
        """Grid estimates of the uniform bounds; Psi bounds are inflated by 5%."""
        field = self.field
        grid = self._grid()

        def slice_bounds(t):
            points = grid.points
            band = self._in_band(t, points)
            psi_t = psi_x = psi_xx = 0.0
            if band.any():
                psi = field.psi(t, points[band])
                psi_t = float(np.max(np.abs(psi.dt)))
                psi_x = float(np.max(np.abs(psi.grad)))
                psi_xx = float(np.max(np.abs(psi.hess_diag)))
            keep = self._outside_exclusion(t, points)
            x1 = points[keep]
            e = np.linalg.norm(field.distance.offset(t, x1), axis=-1)
            v = field.distance.value(t, x1)
            v_grad = field.distance.grad(t, x1)
            v_hess = field.distance.hess_diag(t, x1)
            ratio = v / e**2
            n = x1.shape[1]
            return (
                psi_t,
                psi_x,
                psi_xx,
                float(ratio.max()),
                float(ratio.min()),
                float(np.max(np.abs(v_grad).max(axis=1) / e)),
                float(np.min(np.linalg.norm(v_grad, axis=1) / (math.sqrt(n) * e))),
                float(np.max(np.abs(v_hess))),
                float(e.max()),
                float(e.min()),
                int(np.count_nonzero(~keep)),
            )

        slices = np.array(self.pool.map(slice_bounds, grid.times))
        excluded = int(slices[:, 10].max())
        if excluded:
            logger.warning(
                "%d grid point(s) within %.4g of the target excluded from the bounds",
                excluded,
                self.exclusion_radius,
            )
        thetas = [o.shape.theta for o in field.obstacles]
        return AssumptionConstants(
            c_psi_t=PSI_BOUND_INFLATION * float(slices[:, 0].max()),
            cbar_psi_x=PSI_BOUND_INFLATION * float(slices[:, 1].max()),
            cbar_psi_xx=PSI_BOUND_INFLATION * float(slices[:, 2].max()),
            dbar_V=float(slices[:, 3].max()),
            dunder_V=float(slices[:, 4].min()),
            dbar_Vx=float(slices[:, 5].max()),
            dunder_Vx=float(slices[:, 6].min()),
            dbar_Vxx=float(slices[:, 7].max()),
            cbar_x=float(slices[:, 8].max()),
            cunder_x=float(slices[:, 9].min()),
            delta=self.exclusion_radius,
            theta=min(thetas) if thetas else 1.0,
            kappa=field.kappa,
            dimension=field.dim,
        )

    def lemma1_integrand(self, t: float, points) -> np.ndarray:
        """d(rho)/dt + div(k rho) for the matched gradient law."""
        terms = self.field.divergence_terms(t, points)
        return self.field.rho_dt(t, points) + terms.total()

    def tail_exponent(self, t: float = 0.0) -> float:
        """Decay exponent of (1 + ||k||) / (1 + ||x||) rho along rays beyond the obstacles."""
        field = self.field
        target = field.target_position(t)
        reach = float(np.max(np.abs(np.concatenate([self.lower, self.upper]))))
        for obstacle in field.obstacles:
            offset = np.linalg.norm(obstacle.center.position(t) - target) + obstacle.shape.s
            reach = max(reach, offset)
        radii = np.geomspace(2.0 * reach + 1.0, TAIL_RADIUS_SPAN * (2.0 * reach + 1.0), TAIL_SAMPLES_PER_RAY)
        n = field.dim
        logs_r, logs_f = [], []
        for k in range(self.rays):
            angle = 2.0 * math.pi * k / self.rays
            direction = np.zeros(n)
            direction[0], direction[1] = math.cos(angle), math.sin(angle)
            points = target + radii[:, None] * direction
            value = (
                (1.0 + np.linalg.norm(field.vector_field(t, points), axis=-1))
                / (1.0 + np.linalg.norm(points, axis=-1))
                * field.rho(t, points)
            )
            logs_r.append(np.log(radii))
            logs_f.append(np.log(value))
        slope = np.polyfit(np.concatenate(logs_r), np.concatenate(logs_f), 1)[0]
        return float(-slope)

    def check_lemma1(self) -> Lemma1Result:
        grid = self._grid()

        def slice_min(t):
            keep = self._outside_exclusion(t, grid.points)
            points = grid.points[keep]
            values = self.lemma1_integrand(t, points)
            index = int(np.argmin(values))
            return float(values[index]), points[index], int(np.count_nonzero(~keep))

        results = self.pool.map(slice_min, grid.times)
        index = int(np.argmin([r[0] for r in results]))
        margin, point, _ = results[index]
        excluded = max(r[2] for r in results)
        if excluded:
            logger.warning(
                "%d grid point(s) inside the exclusion ball (radius %.4g) skipped",
                excluded,
                self.exclusion_radius,
            )
        exponent = self.tail_exponent(float(grid.times[0]))
        return Lemma1Result(
            margin=margin,
            margin_time=float(grid.times[index]),
            margin_point=np.asarray(point),
            integral_finite=exponent > 1.0,
            tail_exponent=exponent,
            excluded_points=excluded,
        )

    def liouville_residual(
        self,
        center,
        radius: float,
        t0: float,
        t1: float,
        samples: int = 10_000,
        dt: float = 1e-3,
        seed: int = 0,
    ) -> float:
        """Transport check of d/dt int_{s_t(Z)} rho = int_{s_t(Z)} (rho_t + div(k rho)).

        Samples of the disc Z are flowed with RK4 together with log|J|, whose
        rate is div k. Both sides use the same samples.
        """
        field = self.field
        center = np.asarray(center, dtype=float)
        n = field.dim
        rng = np.random.default_rng(seed)
        direction = rng.normal(size=(samples, n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        x = center + direction * radius * rng.random((samples, 1)) ** (1.0 / n)
        log_j = np.zeros(samples)
        volume = ball_volume(n, radius)

        def flow(t, points):
            evaluation = field.evaluate(t, points)
            k = field.beta * evaluation.grad
            if field.mode is FieldMode.DYNAMIC_TARGET:
                k = k + field.target_velocity(t)
            div_k = field.beta * np.sum(evaluation.hess_diag, axis=-1)
            return k, div_k, evaluation

        def integrand(t, points, jacobian):
            k, div_k, evaluation = flow(t, points)
            rate = evaluation.dt + np.sum(k * evaluation.grad, axis=-1) + evaluation.rho * div_k
            return float(np.mean(rate * jacobian))

        steps = max(1, int(round((t1 - t0) / dt)))
        h = (t1 - t0) / steps
        rho0 = field.evaluate(t0, x).rho
        rates = [integrand(t0, x, np.ones(samples))]
        t = t0
        for step in range(steps):
            k1, d1, _ = flow(t, x)
            k2, d2, _ = flow(t + h / 2, x + h / 2 * k1)
            k3, d3, _ = flow(t + h / 2, x + h / 2 * k2)
            k4, d4, _ = flow(t + h, x + h * k3)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            log_j = log_j + h / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
            t = t0 + (step + 1) * h
            outside = np.any((x < self.lower) | (x > self.upper), axis=1)
            if outside.any():
                index = int(np.argmax(outside))
                raise FlowEscapeError(index, x[index], t)
            rates.append(integrand(t, x, np.exp(log_j)))

        lhs = volume * float(np.mean(field.evaluate(t1, x).rho * np.exp(log_j)) - np.mean(rho0))
        rhs = volume * float(trapezoid(rates, dx=h))
        scale = max(abs(lhs), abs(rhs))
        if scale < LIOUVILLE_EPS:
            return 0.0
        return abs(lhs - rhs) / scale

    def report(
        self, liouville: tuple | None = None, constants: AssumptionConstants | None = None
    ) -> CertificateReport:
        """Assemble every check; `liouville` is (center, radius, t0, t1, samples, dt)."""
        constants = constants or self.estimate_constants()
        alpha, beta = self.field.alpha, self.field.beta
        violations = []
        ranges = alpha_range(constants)
        p1, p2, p3 = ranges.p1, ranges.p2, ranges.p3
        p2_near_zero = abs(p2) <= P2_ZERO_TOLERANCE * max(1.0, abs(p1), abs(p3))
        if p2_near_zero:
            logger.warning(
                "p2 ~ 0: the alpha bound reduces to sqrt(p3/p1)=%.4g, not p3=%.4g",
                math.sqrt(p3 / p1),
                p3,
            )
        if alpha < ranges.alpha_min:
            violations.append(f"alpha={alpha} below alpha_min={ranges.alpha_min:.6g}")
        L1 = lemma1_L1(constants, alpha)
        try:
            beta_min = beta_range(constants, alpha)
        except DegenerateConstantsError as e:
            beta_min = math.inf
            violations.append(str(e))
        if beta < beta_min:
            violations.append(f"beta={beta} below beta_min={beta_min:.6g}")

        lemma1 = self.check_lemma1()
        if lemma1.margin <= 0.0:
            violations.append(
                f"lemma1 margin {lemma1.margin:.6g} <= 0 at t={lemma1.margin_time:.3f}, "
                f"x={np.round(lemma1.margin_point, 4).tolist()}"
            )
        if not lemma1.integral_finite:
            violations.append(f"tail exponent {lemma1.tail_exponent:.4g} <= 1")

        residual = None
        if liouville is not None:
            center, radius, t0, t1, samples, dt = liouville
            residual = self.liouville_residual(center, radius, t0, t1, samples, dt)

        for violation in violations:
            logger.warning("certificate: %s", violation)
        return CertificateReport(
            p1=p1,
            p2=p2,
            p3=p3,
            L1=L1,
            alpha=alpha,
            beta=beta,
            alpha_min=ranges.alpha_min,
            beta_min=beta_min,
            lemma1_margin=lemma1.margin,
            lemma1_margin_time=lemma1.margin_time,
            lemma1_margin_point=np.asarray(lemma1.margin_point).tolist(),
            lemma1_integral_finite=lemma1.integral_finite,
            tail_exponent=lemma1.tail_exponent,
            liouville_residual=residual,
            p2_near_zero=p2_near_zero,
            violations=violations,
            constants=constants,
        )
