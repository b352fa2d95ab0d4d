"""Chart-based Riemannian metrics and the geodesic flow.

Every manifold in the zoo is presented in a single global coordinate chart
of dimension ``d`` (the zoo is 2D, the machinery dimension-generic).  A
chart knows its metric tensor, analytic first/second metric derivatives
where available (finite differences otherwise), an optional exhaustion
coordinate ``r`` for non-compact manifolds, and domain guards.

Index conventions used throughout:

* ``metric(x)[..., i, j]``                = g_ij(x)
* ``metric_deriv(x)[..., k, i, j]``       = d_k g_ij(x)
* ``metric_second_deriv(x)[..., l, k, i, j]`` = d_l d_k g_ij(x)
* ``christoffels(...)[..., k, i, j]``     = Gamma^k_ij (symmetric in i, j)
* ``riemann(...)[..., l, k, i, j]``       = R^l_kij, i.e. the component of
  R(e_i, e_j) e_k along e_l.

All metric-level evaluations broadcast over leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChartDomainError, DegeneratePlaneError, DomainEscapeError

FD_STEP = 1e-5


@dataclass
class TangentVector:
    """A chart point together with a velocity in chart components."""

    base: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.base.shape != self.v.shape:
            raise ValueError("base point and velocity must have equal dimension")


class Chart:
    """Base class: finite-difference fallbacks and shared helpers.

    Subclasses must provide ``metric`` and set ``dim``; everything else has
    a generic (finite-difference) default.
    """

    name = "abstract"
    dim = 2
    #: per-coordinate period, np.nan for non-periodic coordinates
    periods: np.ndarray | None = None
    #: chart-distance cap for one loop segment (convexity proxy)
    segment_cap = 0.5
    compact = False
    #: metric first derivatives are analytic (affects advertised tolerances)
    analytic_derivs = False
    #: chart radius beyond which evaluation is refused
    guard_radius = np.inf
    #: point-wise recentering isometry available (sphere)
    has_recentering = False
    recenter_trigger = np.inf

    # -- metric level -----------------------------------------------------

    def metric(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def metric_deriv(self, x: np.ndarray) -> np.ndarray:
        """Central finite differences of ``metric``, step 1e-5."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        out = np.empty(x.shape[:-1] + (d, d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = FD_STEP
            out[..., k, :, :] = (self.metric(x + e) - self.metric(x - e)) / (2 * FD_STEP)
        return out

    def metric_second_deriv(self, x: np.ndarray) -> np.ndarray:
        """Central finite differences of ``metric_deriv``."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        out = np.empty(x.shape[:-1] + (d, d, d, d))
        for l in range(d):
            e = np.zeros(d)
            e[l] = FD_STEP
            out[..., l, :, :, :] = (
                self.metric_deriv(x + e) - self.metric_deriv(x - e)
            ) / (2 * FD_STEP)
        return out

    def metric_checked(self, x: np.ndarray) -> np.ndarray:
        """Metric with domain guard and positive-definiteness assertion."""
        x = np.asarray(x, dtype=float)
        inside = self.contains(x)
        if not np.all(inside):
            bad = np.asarray(x)[~np.asarray(inside)] if x.ndim > 1 else x
            raise ChartDomainError(f"{self.name}: point outside chart domain: {bad}")
        g = self.metric(x)
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise ChartDomainError(f"{self.name}: metric not positive definite at queried point")
        return g

    # -- domain -----------------------------------------------------------

    def contains(self, x: np.ndarray) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        if np.isinf(self.guard_radius):
            return np.ones(x.shape[:-1], dtype=bool) if x.ndim > 1 else True
        return np.linalg.norm(x, axis=-1) < self.guard_radius

    def reduce_point(self, x: np.ndarray) -> np.ndarray:
        """Wrap periodic coordinates into [0, period)."""
        x = np.asarray(x, dtype=float)
        if self.periods is None:
            return x
        out = x.copy()
        for k, p in enumerate(self.periods):
            if np.isfinite(p):
                out[..., k] = np.mod(out[..., k], p)
        return out

    def wrap_difference(self, delta: np.ndarray) -> np.ndarray:
        """Minimal lift of a coordinate difference (periodic coords to (-P/2, P/2])."""
        delta = np.asarray(delta, dtype=float)
        if self.periods is None:
            return delta
        out = delta.copy()
        for k, p in enumerate(self.periods):
            if np.isfinite(p):
                out[..., k] = out[..., k] - p * np.round(out[..., k] / p)
        return out

    # -- exhaustion (non-compact charts only) ------------------------------

    def exhaustion(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name}: no exhaustion coordinate")

    def exhaustion_grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.dim
        out = np.empty(x.shape[:-1] + (d,)) if x.ndim > 1 else np.empty(d)
        for k in range(d):
            e = np.zeros(d)
            e[k] = FD_STEP
            out[..., k] = (self.exhaustion(x + e) - self.exhaustion(x - e)) / (2 * FD_STEP)
        return out

    def exhaustion_hess(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.dim
        out = np.empty(x.shape[:-1] + (d, d)) if x.ndim > 1 else np.empty((d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = FD_STEP
            out[..., k, :] = (
                self.exhaustion_grad(x + e) - self.exhaustion_grad(x - e)
            ) / (2 * FD_STEP)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    # -- misc ---------------------------------------------------------------

    def gauss_curvature(self, x: np.ndarray) -> np.ndarray:
        """Analytic Gauss curvature (2D charts); raises if unavailable."""
        raise NotImplementedError(f"{self.name}: no analytic curvature")

    def sample_point(self, rng: np.random.Generator, r_min: float = 0.0,
                     r_max: float = 3.0) -> np.ndarray:
        """Draw a point, uniformly in the exhaustion band [r_min, r_max]."""
        raise NotImplementedError

    def recenter_map(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name}: no recentering isometry")

    def __repr__(self):
        return f"<chart {self.name} d={self.dim}>"


# ---------------------------------------------------------------------------
# derived geometric quantities (chart-generic)
# ---------------------------------------------------------------------------


def christoffels(chart: Chart, x: np.ndarray, finite_difference: bool = False) -> np.ndarray:
    """Christoffel symbols Gamma^k_ij = 1/2 g^{km} (d_i g_jm + d_j g_im - d_m g_ij).

    ``finite_difference=True`` forces the finite-difference metric
    derivative even when the chart has an analytic one (oracle path).
    """
    x = np.asarray(x, dtype=float)
    if not np.all(chart.contains(x)):
        raise ChartDomainError(f"{chart.name}: Christoffel evaluation outside domain")
    g = chart.metric(x)
    if finite_difference:
        dg = Chart.metric_deriv(chart, x)
    else:
        dg = chart.metric_deriv(x)
    ginv = np.linalg.inv(g)
    # s[..., m, i, j] = d_i g_jm + d_j g_im - d_m g_ij
    di_gjm = np.einsum("...ijm->...mij", dg)
    dj_gim = np.einsum("...jim->...mij", dg)
    s = di_gjm + dj_gim - dg
    return 0.5 * np.einsum("...km,...mij->...kij", ginv, s)


def christoffel_deriv(chart: Chart, x: np.ndarray) -> np.ndarray:
    """d_l Gamma^k_ij by central differences of ``christoffels``."""
    x = np.asarray(x, dtype=float)
    d = chart.dim
    out = np.empty(x.shape[:-1] + (d, d, d, d))
    for l in range(d):
        e = np.zeros(d)
        e[l] = FD_STEP
        out[..., l, :, :, :] = (
            christoffels(chart, x + e) - christoffels(chart, x - e)
        ) / (2 * FD_STEP)
    return out


def riemann(chart: Chart, x: np.ndarray) -> np.ndarray:
    """Riemann tensor R^l_kij = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik."""
    gam = christoffels(chart, x)
    dgam = christoffel_deriv(chart, x)
    term1 = np.einsum("...iljk->...lkij", dgam)
    term2 = np.einsum("...jlik->...lkij", dgam)
    term3 = np.einsum("...lim,...mjk->...lkij", gam, gam)
    term4 = np.einsum("...ljm,...mik->...lkij", gam, gam)
    return term1 - term2 + term3 - term4


def sectional_curvature(chart: Chart, x: np.ndarray, v: np.ndarray, w: np.ndarray,
                        finite_difference: bool = False) -> float:
    """Sectional curvature g(R(v,w)w, v) / (g(v,v) g(w,w) - g(v,w)^2).

    Independent of the basis of span{v, w}; raises DegeneratePlaneError when
    the Gram determinant falls below 1e-12 times the norm scale.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    g = chart.metric_checked(x)
    gvv = v @ g @ v
    gww = w @ g @ w
    gvw = v @ g @ w
    den = gvv * gww - gvw**2
    if den <= 1e-12 * max(gvv * gww, 1e-300):
        raise DegeneratePlaneError("v, w span a degenerate plane")
    if finite_difference:
        # oracle path: Riemann tensor built from finite differences of g only
        gam = christoffels(chart, x, finite_difference=True)
        d = chart.dim
        dgam = np.empty((d, d, d, d))
        for l in range(d):
            e = np.zeros(d)
            e[l] = FD_STEP * 10
            dgam[l] = (
                christoffels(chart, x + e, finite_difference=True)
                - christoffels(chart, x - e, finite_difference=True)
            ) / (2 * FD_STEP * 10)
        rm = (
            np.einsum("iljk->lkij", dgam)
            - np.einsum("jlik->lkij", dgam)
            + np.einsum("lim,mjk->lkij", gam, gam)
            - np.einsum("ljm,mik->lkij", gam, gam)
        )
    else:
        rm = riemann(chart, x)
    rvw_w = np.einsum("lkij,k,i,j->l", rm, w, v, w)
    num = rvw_w @ g @ v
    return float(num / den)


def curvature_operator(chart: Chart, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix of w -> R(w, v)v in chart components (the Jacobi-equation operator).

    Uses the closed-form 2D expression R(w,v)v = K (g(v,v) w - g(w,v) v)
    when the chart has analytic Gauss curvature, the generic Riemann tensor
    otherwise.
    """
    g = chart.metric(x)
    try:
        k = chart.gauss_curvature(x)
        if chart.dim != 2:
            raise NotImplementedError
        gv = g @ v
        return float(k) * (float(v @ gv) * np.eye(2) - np.outer(v, gv))
    except NotImplementedError:
        rm = riemann(chart, x)
        return np.einsum("lkij,i,j->lk", rm, v, v)


# ---------------------------------------------------------------------------
# geodesic flow
# ---------------------------------------------------------------------------


def _geodesic_rhs(chart: Chart, x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gam = christoffels(chart, x)
    acc = -np.einsum("kij,i,j->k", gam, v, v)
    return v, acc


def geodesic_flow(chart: Chart, start: TangentVector, t: float, steps: int = 256) -> TangentVector:
    """Integrate the geodesic equation with fixed-step classical RK4.

    Returns the endpoint (position, velocity).  Chart-domain escape raises
    DomainEscapeError carrying the exit time.  Metric speed g(v, v) is
    conserved to relative 1e-6 per unit time at 256 steps/unit.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if steps < 16:
        raise ValueError("steps must be >= 16")
    x, v = flow_trajectory(chart, start, t, steps)
    return TangentVector(x[-1], v[-1])


def flow_trajectory(chart: Chart, start: TangentVector, t: float,
                    steps: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Full RK4 trajectory: arrays of shape (steps+1, d) for x and v."""
    d = chart.dim
    x = np.empty((steps + 1, d))
    v = np.empty((steps + 1, d))
    x[0], v[0] = start.base, start.v
    if not np.all(chart.contains(x[0])):
        raise ChartDomainError(f"{chart.name}: flow start outside domain")
    h = t / steps
    for n in range(steps):
        xn, vn = x[n], v[n]
        try:
            k1x, k1v = _geodesic_rhs(chart, xn, vn)
            k2x, k2v = _geodesic_rhs(chart, xn + 0.5 * h * k1x, vn + 0.5 * h * k1v)
            k3x, k3v = _geodesic_rhs(chart, xn + 0.5 * h * k2x, vn + 0.5 * h * k2v)
            k4x, k4v = _geodesic_rhs(chart, xn + h * k3x, vn + h * k3v)
        except ChartDomainError:
            raise DomainEscapeError(
                f"{chart.name}: geodesic left the chart domain", exit_time=n * h
            )
        x[n + 1] = xn + (h / 6) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v[n + 1] = vn + (h / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not np.all(chart.contains(x[n + 1])):
            raise DomainEscapeError(
                f"{chart.name}: geodesic left the chart domain", exit_time=(n + 1) * h
            )
    return x, v


def metric_speed(chart: Chart, x: np.ndarray, v: np.ndarray) -> float:
    g = chart.metric(x)
    return float(np.sqrt(v @ g @ v))


# ---------------------------------------------------------------------------
# the zoo
# ---------------------------------------------------------------------------


class FlatPlane(Chart):
    """Euclidean plane, identity metric; exhaustion r = |x|."""

    name = "plane"
    analytic_derivs = True

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()

    def metric_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2, 2, 2))

    def metric_second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2, 2, 2, 2))

    def gauss_curvature(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def exhaustion(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)

    def exhaustion_grad(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return x / np.maximum(r, 1e-14)

    def exhaustion_hess(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        xhat = x / np.maximum(r[..., None], 1e-14)
        eye = np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2))
        proj = eye - xhat[..., :, None] * xhat[..., None, :]
        return proj / np.maximum(r[..., None, None], 1e-14)

    def sample_point(self, rng, r_min=0.0, r_max=3.0):
        r = rng.uniform(r_min, r_max)
        phi = rng.uniform(0, 2 * np.pi)
        return np.array([r * np.cos(phi), r * np.sin(phi)])


class _ProfileChart(Chart):
    """Surface-of-revolution-type metric diag(1, rho(z)^2) in (z, theta).

    Subclasses supply the profile rho and its first two derivatives.
    Gauss curvature is -rho''/rho; circles z = const with rho'(z) = 0 are
    closed geodesics of length 2 pi rho(z).
    """

    analytic_derivs = True
    z_bound = 300.0  # cosh-type profiles overflow float64 past ~700

    def __init__(self):
        self.periods = np.array([np.nan, 2 * np.pi])

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs(x[..., 0]) < self.z_bound

    def profile(self, z):
        raise NotImplementedError

    def profile_d1(self, z):
        raise NotImplementedError

    def profile_d2(self, z):
        raise NotImplementedError

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        rho = self.profile(x[..., 0])
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = rho**2
        return g

    def metric_deriv(self, x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0]
        dg = np.zeros(x.shape[:-1] + (2, 2, 2))
        dg[..., 0, 1, 1] = 2 * self.profile(z) * self.profile_d1(z)
        return dg

    def metric_second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0]
        rho, d1, d2 = self.profile(z), self.profile_d1(z), self.profile_d2(z)
        d2g = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        d2g[..., 0, 0, 1, 1] = 2 * (d1**2 + rho * d2)
        return d2g

    def gauss_curvature(self, x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0]
        return -self.profile_d2(z) / self.profile(z)

    def exhaustion(self, x):
        return np.abs(np.asarray(x, dtype=float)[..., 0])

    def exhaustion_grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 0] = np.sign(x[..., 0])
        return out

    def exhaustion_hess(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2, 2))

    def sample_point(self, rng, r_min=0.0, r_max=3.0):
        z = rng.uniform(r_min, r_max) * rng.choice([-1.0, 1.0])
        theta = rng.uniform(0, 2 * np.pi)
        return np.array([z, theta])


class FlatCylinder(_ProfileChart):
    """Flat cylinder R x S^1 of radius ``radius``; exhaustion r = |z|."""

    name = "cylinder"

    def __init__(self, radius: float = 1.0):
        super().__init__()
        self.radius = float(radius)

    def profile(self, z):
        return np.full(np.shape(z), self.radius)

    def profile_d1(self, z):
        return np.zeros(np.shape(z))

    def profile_d2(self, z):
        return np.zeros(np.shape(z))


class Funnel(_ProfileChart):
    """Hyperbolic funnel: profile radius cosh(z), constant curvature -1.

    The waist circle z = 0 is the unique closed geodesic; its length is
    2 pi cosh(0) = 2 pi.
    """

    name = "funnel"

    profile = staticmethod(np.cosh)
    profile_d1 = staticmethod(np.sinh)
    profile_d2 = staticmethod(np.cosh)


class BumpedCylinder(_ProfileChart):
    """Flat cylinder with a compactly supported curvature bump in |z| < 1.

    Profile 1 + A (1 - z^2)^4 inside the bump, 1 outside (C^3 junction, so
    the curvature -rho''/rho is C^1).  The bump carries positive curvature
    near z = 0 and negative lobes near |z| = 1; everything at |z| >= 1 is
    exactly flat.
    """

    name = "bumped_cylinder"

    def __init__(self, amplitude: float = 0.3):
        super().__init__()
        self.amplitude = float(amplitude)

    def profile(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) < 1
        b = np.where(inside, (1 - z**2) ** 4, 0.0)
        return 1.0 + self.amplitude * b

    def profile_d1(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) < 1
        db = np.where(inside, -8 * z * (1 - z**2) ** 3, 0.0)
        return self.amplitude * db

    def profile_d2(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) < 1
        d2b = np.where(
            inside, -8 * (1 - z**2) ** 3 + 48 * z**2 * (1 - z**2) ** 2, 0.0
        )
        return self.amplitude * d2b


class _ConformalChart(Chart):
    """Conformal metric lambda(|u|^2) * I on a planar domain."""

    analytic_derivs = True

    def _lam(self, s):
        raise NotImplementedError

    def _dlam(self, s):
        """d lambda / d s with s = |u|^2."""
        raise NotImplementedError

    def _d2lam(self, s):
        raise NotImplementedError

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x**2, axis=-1)
        lam = self._lam(s)
        return lam[..., None, None] * np.eye(2)

    def metric_deriv(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x**2, axis=-1)
        dlam_dx = 2 * self._dlam(s)[..., None] * x          # [..., k]
        return dlam_dx[..., :, None, None] * np.eye(2)

    def metric_second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x**2, axis=-1)
        dl, d2l = self._dlam(s), self._d2lam(s)
        eye = np.eye(2)
        # d_l d_k lambda = 2 dl delta_lk + 4 d2l u_l u_k
        hess = 2 * dl[..., None, None] * eye + 4 * d2l[..., None, None] * (
            x[..., :, None] * x[..., None, :]
        )
        return hess[..., :, :, None, None] * eye


class SphereStereographic(_ConformalChart):
    """Round unit 2-sphere in a stereographic chart, g = 4/(1+|u|^2)^2 I.

    The projection pole sits at chart infinity; evaluation is guarded at
    chart radius 10 and loops drifting outward are recentered by the
    isometric involution u -> (u1, -u2)/|u|^2 (a half-turn of the sphere),
    which leaves the metric expression invariant.
    """

    name = "sphere"
    compact = True
    guard_radius = 10.0
    has_recentering = True
    recenter_trigger = 3.0
    segment_cap = 0.75

    def _lam(self, s):
        return 4.0 / (1.0 + s) ** 2

    def _dlam(self, s):
        return -8.0 / (1.0 + s) ** 3

    def _d2lam(self, s):
        return 24.0 / (1.0 + s) ** 4

    def gauss_curvature(self, x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1])

    def recenter_map(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x**2, axis=-1, keepdims=True)
        out = x / np.maximum(s, 1e-300)
        out[..., 1] *= -1
        return out

    def sample_point(self, rng, r_min=0.0, r_max=2.0):
        r = rng.uniform(r_min, min(r_max, self.recenter_trigger))
        phi = rng.uniform(0, 2 * np.pi)
        return np.array([r * np.cos(phi), r * np.sin(phi)])


class PoincareDisk(_ConformalChart):
    """Hyperbolic plane as the unit disk, g = 4/(1-|u|^2)^2 I, curvature -1.

    Exhaustion is the true hyperbolic distance to the origin,
    r(u) = 2 artanh(|u|).
    """

    name = "hyperbolic"
    guard_radius = 1.0 - 1e-12
    segment_cap = 0.15

    def _lam(self, s):
        return 4.0 / (1.0 - s) ** 2

    def _dlam(self, s):
        return 8.0 / (1.0 - s) ** 3

    def _d2lam(self, s):
        return 24.0 / (1.0 - s) ** 4

    def gauss_curvature(self, x):
        x = np.asarray(x, dtype=float)
        return -np.ones(x.shape[:-1])

    def exhaustion(self, x):
        rho = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return 2.0 * np.arctanh(np.clip(rho, 0, 1 - 1e-15))

    def exhaustion_grad(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x, axis=-1, keepdims=True)
        fac = 2.0 / (1.0 - np.clip(rho, 0, 1 - 1e-15) ** 2)
        return fac * x / np.maximum(rho, 1e-14)

    def exhaustion_hess(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x, axis=-1)
        rho = np.clip(rho, 1e-14, 1 - 1e-15)
        uhat = x / rho[..., None]
        rp = 2.0 / (1.0 - rho**2)                       # dr/drho
        rpp = 4.0 * rho / (1.0 - rho**2) ** 2           # d2r/drho2
        eye = np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2))
        uu = uhat[..., :, None] * uhat[..., None, :]
        return rpp[..., None, None] * uu + (rp / rho)[..., None, None] * (eye - uu)

    def sample_point(self, rng, r_min=0.0, r_max=3.0):
        r = rng.uniform(r_min, r_max)
        rho = np.tanh(r / 2.0)
        phi = rng.uniform(0, 2 * np.pi)
        return np.array([rho * np.cos(phi), rho * np.sin(phi)])


class Paraboloid(Chart):
    """Paraboloid of revolution z = rho^2 in polar chart (rho, theta).

    Induced metric diag(1 + 4 rho^2, rho^2); Gauss curvature
    4/(1 + 4 rho^2)^2.  The polar chart degenerates at the apex, so the
    domain excludes a tiny disk around rho = 0.
    """

    name = "paraboloid"
    analytic_derivs = True
    apex_guard = 1e-8

    def __init__(self):
        self.periods = np.array([np.nan, 2 * np.pi])

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        rho = x[..., 0]
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0 + 4.0 * rho**2
        g[..., 1, 1] = rho**2
        return g

    def metric_deriv(self, x):
        x = np.asarray(x, dtype=float)
        rho = x[..., 0]
        dg = np.zeros(x.shape[:-1] + (2, 2, 2))
        dg[..., 0, 0, 0] = 8.0 * rho
        dg[..., 0, 1, 1] = 2.0 * rho
        return dg

    def metric_second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        d2g = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        d2g[..., 0, 0, 0, 0] = 8.0
        d2g[..., 0, 0, 1, 1] = 2.0
        return d2g

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] > self.apex_guard

    def gauss_curvature(self, x):
        x = np.asarray(x, dtype=float)
        rho = x[..., 0]
        return 4.0 / (1.0 + 4.0 * rho**2) ** 2

    def exhaustion(self, x):
        return np.asarray(x, dtype=float)[..., 0]

    def exhaustion_grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 0] = 1.0
        return out

    def exhaustion_hess(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2, 2))

    def sample_point(self, rng, r_min=0.0, r_max=3.0):
        rho = rng.uniform(max(r_min, 0.05), r_max)
        theta = rng.uniform(0, 2 * np.pi)
        return np.array([rho, theta])


CHART_BUILDERS = {
    "plane": FlatPlane,
    "cylinder": FlatCylinder,
    "sphere": SphereStereographic,
    "hyperbolic": PoincareDisk,
    "paraboloid": Paraboloid,
    "funnel": Funnel,
    "bumped_cylinder": BumpedCylinder,
}


def make_chart(name: str, **params) -> Chart:
    """Instantiate a zoo chart by name with keyword parameters."""
    try:
        builder = CHART_BUILDERS[name]
    except KeyError:
        raise ChartDomainError(
            f"unknown chart {name!r}; available: {sorted(CHART_BUILDERS)}"
        )
    return builder(**params)
