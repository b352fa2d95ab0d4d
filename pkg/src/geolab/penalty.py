"""Basepoint penalty: the family of radial ramps restoring compactness.

On a non-compact chart with exhaustion r, stage alpha of the schedule adds

    f_alpha(x) = c * max(0, r(x) - R_alpha)^3,      R_alpha = R_0 + alpha * dR,

to the energy, evaluated at the loop basepoint only.  The cubic ramp is the
minimum-regularity C^2 choice that still has a Hessian; it is nonnegative,
proper on its support, vanishes on {r <= R_alpha}, and its support escapes
every compact set as alpha grows.  Compact charts get the zero penalty and
the machinery degenerates to a classical closed-geodesic search.

A critical point of the penalized energy is a geodesic away from its
basepoint, with velocity jump v(0-) - v(0+) equal to the metric gradient
of f_alpha there (the corner condition).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .charts import Chart, christoffels
from .loops import (
    DiscreteLoop,
    energy,
    energy_gradient,
    one_sided_velocities,
    validate_loop,
)

RAMP_EXPONENT = 3  # fixed: C^2 is the minimum regularity for a Hessian


@dataclass(frozen=True)
class PenaltySchedule:
    """Strictly increasing support radii R_alpha = r0 + alpha * dr, stiffness c."""

    r0: float = 2.0
    dr: float = 1.0
    stiffness: float = 1.0

    def __post_init__(self):
        if self.r0 <= 0 or self.dr <= 0 or self.stiffness <= 0:
            raise ValueError("penalty schedule needs r0, dr, stiffness > 0")

    def radius(self, alpha: int) -> float:
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        return self.r0 + alpha * self.dr


def penalty_value(chart: Chart, schedule: PenaltySchedule, alpha: int, x: np.ndarray) -> float:
    if chart.compact:
        return 0.0
    excess = float(chart.exhaustion(np.asarray(x, dtype=float))) - schedule.radius(alpha)
    if excess <= 0.0:
        return 0.0
    return schedule.stiffness * excess**RAMP_EXPONENT


def penalty_coordinate_grad(chart: Chart, schedule: PenaltySchedule, alpha: int,
                            x: np.ndarray) -> np.ndarray:
    """Plain coordinate partials d_k f_alpha (what the discrete descent needs)."""
    x = np.asarray(x, dtype=float)
    if chart.compact:
        return np.zeros(chart.dim)
    excess = float(chart.exhaustion(x)) - schedule.radius(alpha)
    if excess <= 0.0:
        return np.zeros(chart.dim)
    return 3.0 * schedule.stiffness * excess**2 * chart.exhaustion_grad(x)


def penalty_coordinate_hess(chart: Chart, schedule: PenaltySchedule, alpha: int,
                            x: np.ndarray) -> np.ndarray:
    """Coordinate second derivatives d_i d_j f_alpha."""
    x = np.asarray(x, dtype=float)
    d = chart.dim
    if chart.compact:
        return np.zeros((d, d))
    excess = float(chart.exhaustion(x)) - schedule.radius(alpha)
    if excess <= 0.0:
        return np.zeros((d, d))
    c = schedule.stiffness
    dr = chart.exhaustion_grad(x)
    return 6.0 * c * excess * np.outer(dr, dr) + 3.0 * c * excess**2 * chart.exhaustion_hess(x)


def penalty_gradient_and_hessian(chart: Chart, schedule: PenaltySchedule, alpha: int,
                                 x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Metric gradient and covariant Hessian of the ramp at x.

    grad f = g^{-1} df;   (Hess f)_ij = d_i d_j f - Gamma^k_ij d_k f.
    Both vanish identically on {r <= R_alpha}.
    """
    x = np.asarray(x, dtype=float)
    df = penalty_coordinate_grad(chart, schedule, alpha, x)
    if not np.any(df):
        d = chart.dim
        return np.zeros(d), np.zeros((d, d))
    g = chart.metric_checked(x)
    grad = np.linalg.solve(g, df)
    d2f = penalty_coordinate_hess(chart, schedule, alpha, x)
    gam = christoffels(chart, x)
    hess = d2f - np.einsum("kij,k->ij", gam, df)
    return grad, 0.5 * (hess + hess.T)


def penalized_energy(chart: Chart, schedule: PenaltySchedule, alpha: int,
                     loop: DiscreteLoop) -> float:
    return energy(chart, loop) + penalty_value(chart, schedule, alpha, loop.basepoint)


def penalized_gradient(chart: Chart, schedule: PenaltySchedule, alpha: int,
                       loop: DiscreteLoop) -> np.ndarray:
    grad = energy_gradient(chart, loop)
    grad[0] += penalty_coordinate_grad(chart, schedule, alpha, loop.basepoint)
    return grad


def corner_residual(chart: Chart, schedule: PenaltySchedule, alpha: int,
                    loop: DiscreteLoop, grad_tol: float = 1e-3) -> np.ndarray:
    """Velocity-jump defect at the basepoint: v(0-) - v(0+) + 1/2 grad f_alpha.

    The first variation of E + f(gamma(0)) with E = integral g(gd, gd) dt
    gives the boundary term 2 g(v(0-) - v(0+), .) + df(.), so a critical
    point has velocity jump -1/2 grad f (antiparallel to the penalty
    gradient; a jump equal to +grad f is stationary for no normalization
    of E).  One-sided velocities come from the adjacent chords with their
    second-order covariant correction (the chord approximates the velocity
    at the segment midpoint, not at the node).  The residual tends to zero
    under node refinement exactly at critical points, and identically for
    smooth closed geodesics off the penalty support.
    """
    validate_loop(chart, loop)
    n = loop.n_nodes
    gnorm = float(np.linalg.norm(penalized_gradient(chart, schedule, alpha, loop))) / n
    if gnorm > grad_tol:
        warnings.warn(
            f"corner residual of a non-critical loop (scaled gradient {gnorm:.2e}); "
            "the value is computed but not meaningful",
            stacklevel=2,
        )
    v_minus, v_plus = one_sided_velocities(chart, loop)
    grad_f, _ = penalty_gradient_and_hessian(chart, schedule, alpha, loop.basepoint)
    return (v_minus - v_plus) + 0.5 * grad_f


@dataclass(frozen=True)
class Classification:
    """Outcome of the genuine-vs-penalized dichotomy for one critical point."""

    case: str                      # "genuine" | "penalty_supported"
    penalty_at_basepoint: float
    separation_checked: bool
    containment_ok: bool | None    # None when the separation condition was not checkable


def classify_critical_point(chart: Chart, schedule: PenaltySchedule, alpha: int,
                            loop: DiscreteLoop, ell: float,
                            k_radius: float | None = None) -> Classification:
    """Genuine closed geodesic vs penalty-supported corner point.

    A converged critical point with basepoint off the penalty support is a
    genuine closed geodesic.  When it sits on the support and the schedule
    separates the support from the ball {r <= k_radius} by more than ell
    (each exhaustion in the zoo is 1-Lipschitz, so radius difference bounds
    distance from below), the whole loop must stay outside that ball; that
    containment is asserted node by node.  Without a k_radius the
    classification is returned with the containment unchecked.
    """
    fval = penalty_value(chart, schedule, alpha, loop.basepoint)
    if fval == 0.0:
        return Classification("genuine", 0.0, False, None)
    if k_radius is None:
        return Classification("penalty_supported", fval, False, None)
    separated = schedule.radius(alpha) - k_radius > ell
    if not separated:
        return Classification("penalty_supported", fval, False, None)
    r_nodes = chart.exhaustion(loop.nodes)
    return Classification("penalty_supported", fval, True, bool(np.all(r_nodes > k_radius)))
