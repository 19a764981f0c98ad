from typing import NamedTuple

import numpy as np


class AssumptionConstants(NamedTuple):
    """Uniform bounds on the obstacle product and the distance function.

    Psi bounds cover the sensing bands; distance bounds cover the certification
    set (workspace minus the ball of radius `delta` around the target).
    """

    c_psi_t: float
    cbar_psi_x: float
    cbar_psi_xx: float
    dbar_V: float
    dunder_V: float
    dbar_Vx: float
    dunder_Vx: float
    dbar_Vxx: float
    cbar_x: float
    cunder_x: float
    delta: float
    theta: float
    kappa: float = 1.0
    dimension: int = 2


class AlphaRange(NamedTuple):
    alpha_min: float
    quadratic_root: float
    outside_bound: float
    p1: float
    p2: float
    p3: float


class Lemma1Result(NamedTuple):
    """Sampled minimum of d(rho)/dt + div(k rho) and the tail-decay check."""

    margin: float
    margin_time: float
    margin_point: np.ndarray
    integral_finite: bool
    tail_exponent: float
    excluded_points: int


class CertificateReport(NamedTuple):
    p1: float
    p2: float
    p3: float
    L1: float
    alpha: float
    beta: float
    alpha_min: float
    beta_min: float
    lemma1_margin: float
    lemma1_margin_time: float
    lemma1_margin_point: list[float]
    lemma1_integral_finite: bool
    tail_exponent: float
    liouville_residual: float | None
    p2_near_zero: bool
    violations: list[str]
    constants: AssumptionConstants

    @property
    def passed(self) -> bool:
        return not self.violations
