"""System gallery: flat-chart and metric second-order systems.

Acceleration laws accept ``(t, q, qd)`` where q/qd may carry a leading batch
axis; every gallery law broadcasts.  Metric systems store the covariant
forcing separately from the chart acceleration so growth checks and the
velocity cutoff can act on the invariant quantity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import ChartSingularity, Discontinuity, SingularMetric, UnboundedForce

__all__ = [
    "GrowthBound",
    "MetricSpec",
    "SystemSpec",
    "CurveSpec",
    "RotationLaw",
    "ChainSpec",
    "pendulum_system",
    "curve_pendulum_system",
    "rotating_curve_system",
    "vertical_tangent_params",
    "morse_chain_system",
    "morse_potential",
    "morse_force",
    "chain_field_sign_report",
    "spherical_pendulum_system",
    "geodesic_system",
    "forced_metric_system",
    "flat_metric",
    "sphere_polar_metric",
    "sphere_stereographic_metric",
    "flat_system",
    "growth_check",
    "check_time_periodicity",
    "circle_curve",
    "curve_from_parametric",
]


@dataclass(frozen=True)
class GrowthBound:
    """Velocity growth bound ||v|| <= a + b*||qd||**(2 - delta)."""

    a: float
    b: float
    delta: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or not (0 < self.delta <= 2):
            raise ValueError("need a,b >= 0 and delta in (0, 2]")

    def bound(self, speed):
        return self.a + self.b * np.asarray(speed) ** (2.0 - self.delta)


@dataclass(frozen=True)
class MetricSpec:
    """Kinetic-energy matrix A(q) plus optional closed-form connection.

    ``christoffel(q)`` returns the (k, i, j) array of connection
    coefficients; when absent they come from central finite differences of
    ``matrix`` with step ``fd_step`` and the Levi-Civita formula.
    """

    matrix: Callable[[np.ndarray], np.ndarray]
    christoffel: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-5

    def matrix_at(self, q: np.ndarray) -> np.ndarray:
        A = np.asarray(self.matrix(q), dtype=float)
        if not np.allclose(A, A.T, atol=1e-12):
            raise SingularMetric(f"metric not symmetric at q={q}")
        return A

    def check_spd(self, q: np.ndarray) -> None:
        A = self.matrix_at(q)
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise SingularMetric(f"metric not positive definite at q={q}") from None

    def christoffel_at(self, q: np.ndarray) -> np.ndarray:
        if self.christoffel is not None:
            return np.asarray(self.christoffel(q), dtype=float)
        return self._christoffel_fd(q)

    def _christoffel_fd(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        n = q.size
        h = self.fd_step
        dA = np.empty((n, n, n))  # dA[k] = dA/dq_k
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            dA[k] = (self.matrix_at(q + e) - self.matrix_at(q - e)) / (2 * h)
        A = self.matrix_at(q)
        try:
            Ainv = np.linalg.inv(A)
        except np.linalg.LinAlgError:
            raise SingularMetric(f"metric not invertible at q={q}") from None
        # Gamma^k_ij = 1/2 A^{kl} (d_i A_lj + d_j A_li - d_l A_ij)
        term = dA.transpose(1, 2, 0) + dA.transpose(1, 0, 2) - dA  # index (l, i, j)
        return 0.5 * np.einsum("kl,lij->kij", Ainv, term)

    def energy(self, q: np.ndarray, qd: np.ndarray) -> float:
        A = self.matrix_at(np.asarray(q, dtype=float))
        qd = np.asarray(qd, dtype=float)
        return 0.5 * float(qd @ A @ qd)

    def norm(self, q: np.ndarray, vec: np.ndarray) -> float:
        A = self.matrix_at(np.asarray(q, dtype=float))
        vec = np.asarray(vec, dtype=float)
        return math.sqrt(max(float(vec @ A @ vec), 0.0))


@dataclass(frozen=True)
class SystemSpec:
    """A second-order non-autonomous system q'' = accel(t, q, qd).

    For metric systems ``accel`` is the chart acceleration (geodesic terms
    included) and ``forcing`` the covariant right-hand side.  ``wrap`` lists
    per-coordinate angular periods (None for linear coordinates) so the
    period map can compare chart points on angular charts.
    """

    dim: int
    period: float
    accel: Callable
    metric: MetricSpec | None = None
    growth: GrowthBound | None = None
    forcing: Callable | None = None
    wrap: tuple | None = None
    name: str = "custom"
    batchable: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.wrap is not None and len(self.wrap) != self.dim:
            raise ValueError("wrap must list one entry per coordinate")

    def wrap_delta(self, dq: np.ndarray) -> np.ndarray:
        """Coordinate difference with angular coordinates wrapped to (-L/2, L/2]."""
        dq = np.array(dq, dtype=float)
        if self.wrap is None:
            return dq
        for j, L in enumerate(self.wrap):
            if L is not None:
                dq[..., j] = dq[..., j] - L * np.round(dq[..., j] / L)
        return dq


def check_time_periodicity(system: SystemSpec, q_box, qd_box, n: int = 100,
                           tol: float = 1e-12, seed: int = 2026) -> float:
    """Max |accel(t+T) - accel(t)| over random samples; raises if above tol."""
    rng = np.random.default_rng(seed)
    lo_q, hi_q = np.asarray(q_box[0], float), np.asarray(q_box[1], float)
    lo_v, hi_v = np.asarray(qd_box[0], float), np.asarray(qd_box[1], float)
    worst = 0.0
    for _ in range(n):
        t = float(rng.uniform(0, system.period))
        q = rng.uniform(lo_q, hi_q)
        qd = rng.uniform(lo_v, hi_v)
        a0 = np.asarray(system.accel(t, q, qd))
        a1 = np.asarray(system.accel(t + system.period, q, qd))
        worst = max(worst, float(np.max(np.abs(a1 - a0))))
    if worst > tol:
        raise ValueError(f"system {system.name!r} not T-periodic: max deviation {worst:.3e}")
    return worst


# ---------------------------------------------------------------------------
# flat-chart systems
# ---------------------------------------------------------------------------

def flat_system(accel, T, dim, growth=None, name="custom_flat"):
    """Wrap a plain acceleration law q'' = accel(t, q, qd)."""
    return SystemSpec(dim=dim, period=float(T), accel=accel, growth=growth, name=name)


def pendulum_system(f, T, f_bound) -> SystemSpec:
    """Pendulum with horizontal pivot force: q'' = f(t,q,qd) sin q - cos q.

    ``f_bound`` is the known bound on |f|; it feeds the growth bound
    (a, b, delta) = (1 + C, 0, 1).
    """
    if f_bound is None:
        raise UnboundedForce("pendulum_system needs a bound on |f|")

    def accel(t, q, qd):
        return f(t, q, qd) * np.sin(q) - np.cos(q)

    return SystemSpec(dim=1, period=float(T), accel=accel,
                      growth=GrowthBound(1.0 + float(f_bound), 0.0, 1.0),
                      name="pendulum")


def flat_metric(dim: int) -> MetricSpec:
    eye = np.eye(dim)
    zeros = np.zeros((dim, dim, dim))
    return MetricSpec(matrix=lambda q: eye, christoffel=lambda q: zeros)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveSpec:
    """Naturally parametrized planar curve (x(s), y(s)), |(x', y')| = 1."""

    x: Callable
    y: Callable
    dx: Callable
    dy: Callable
    ddx: Callable
    ddy: Callable
    length: float
    closed: bool

    def validate(self, n: int = 512, tol: float = 1e-8) -> float:
        s = np.linspace(0.0, self.length, n)
        speed = np.hypot(self.dx(s), self.dy(s))
        worst = float(np.max(np.abs(speed - 1.0)))
        if worst > tol:
            raise ValueError(f"curve is not naturally parametrized (|speed-1| up to {worst:.2e})")
        return worst


def circle_curve(radius: float = 1.0, center=(0.0, 0.0), start: str = "bottom") -> CurveSpec:
    """Counterclockwise circle in exact closed form.

    ``start`` places s = 0 at the bottom ("bottom") or the rightmost point
    ("right") of the circle.
    """
    cx, cy = center
    r = float(radius)
    phase = -math.pi / 2 if start == "bottom" else 0.0

    def ang(s):
        return np.asarray(s) / r + phase

    return CurveSpec(
        x=lambda s: cx + r * np.cos(ang(s)),
        y=lambda s: cy + r * np.sin(ang(s)),
        dx=lambda s: -np.sin(ang(s)),
        dy=lambda s: np.cos(ang(s)),
        ddx=lambda s: -np.cos(ang(s)) / r,
        ddy=lambda s: -np.sin(ang(s)) / r,
        length=2 * math.pi * r,
        closed=True,
    )


def curve_from_parametric(fx, fy, u0: float, u1: float, closed: bool,
                          n_table: int = 16384) -> CurveSpec:
    """Arclength-reparametrize a smooth curve given in any parameter.

    Cumulative Simpson quadrature of the speed builds s(u); the monotone
    PCHIP inverse gives u(s); position splines in s supply derivatives.
    """
    from scipy.integrate import cumulative_simpson

    u = np.linspace(u0, u1, 2 * n_table + 1)
    X, Y = np.asarray(fx(u), float), np.asarray(fy(u), float)
    bc_u = "periodic" if closed else "not-a-knot"
    if closed:
        X[-1], Y[-1] = X[0], Y[0]
    dXu = CubicSpline(u, X, bc_type=bc_u)(u, 1)
    dYu = CubicSpline(u, Y, bc_type=bc_u)(u, 1)
    speed = np.hypot(dXu, dYu)
    s = cumulative_simpson(speed, x=u, initial=0.0)
    length = float(s[-1])
    u_of_s = PchipInterpolator(s, u)

    ss = np.linspace(0.0, length, 2 * n_table + 1)
    uu = u_of_s(ss)
    bc = "periodic" if closed else "not-a-knot"
    Xs = np.asarray(fx(uu), float)
    Ys = np.asarray(fy(uu), float)
    if closed:
        Xs[-1], Ys[-1] = Xs[0], Ys[0]
    spx = CubicSpline(ss, Xs, bc_type=bc)
    spy = CubicSpline(ss, Ys, bc_type=bc)

    def wrap_s(sv):
        sv = np.asarray(sv, dtype=float)
        return np.mod(sv, length) if closed else sv

    return CurveSpec(
        x=lambda sv: spx(wrap_s(sv)),
        y=lambda sv: spy(wrap_s(sv)),
        dx=lambda sv: spx(wrap_s(sv), 1),
        dy=lambda sv: spy(wrap_s(sv), 1),
        ddx=lambda sv: spx(wrap_s(sv), 2),
        ddy=lambda sv: spy(wrap_s(sv), 2),
        length=length,
        closed=closed,
    )


def curve_pendulum_system(curve: CurveSpec, f, T, f_bound=None) -> SystemSpec:
    """Bead on a fixed curve under gravity and horizontal force f(t)."""
    curve.validate()

    def accel(t, q, qd):
        s = q[..., 0]
        a = f(t) * curve.dx(s) - curve.dy(s)
        return np.asarray(a)[..., None]

    growth = None
    if f_bound is not None:
        growth = GrowthBound(float(f_bound) + 1.0, 0.0, 1.0)
    return SystemSpec(dim=1, period=float(T), accel=accel, growth=growth,
                      name="curve_pendulum")


@dataclass(frozen=True)
class RotationLaw:
    """Rotation angle phi(t) with first and second derivatives."""

    phi: Callable
    dphi: Callable
    ddphi: Callable


def rotating_curve_system(curve: CurveSpec, law: RotationLaw, T, bound=None) -> SystemSpec:
    """Unit mass sliding on a closed curve rotating about the origin.

    q'' = -phi''(x y' - y x') + phi'^2 (x x' + y y') - (x' sin phi + y' cos phi)
    """
    if not curve.closed:
        raise ValueError("rotating_curve_system needs a closed curve")
    curve.validate()

    def accel(t, q, qd):
        s = q[..., 0]
        x, y = curve.x(s), curve.y(s)
        dx, dy = curve.dx(s), curve.dy(s)
        ph, dph, ddph = law.phi(t), law.dphi(t), law.ddphi(t)
        a = (-ddph * (x * dy - y * dx)
             + dph ** 2 * (x * dx + y * dy)
             - (dx * np.sin(ph) + dy * np.cos(ph)))
        return np.asarray(a)[..., None]

    growth = GrowthBound(float(bound), 0.0, 1.0) if bound is not None else None
    return SystemSpec(dim=1, period=float(T), accel=accel, growth=growth,
                      name="rotating_curve")


def vertical_tangent_params(curve: CurveSpec, law: RotationLaw, t: float,
                            n_scan: int = 1024) -> tuple[float, float]:
    """Parameters of the two points whose rotated tangent is vertical.

    Returns (s1, s2) with x'(s) sin(phi) + y'(s) cos(phi) = +1 at s1 (tangent
    parallel to the rotated up direction) and -1 at s2, windowed so
    s1 < s2; the arc [s1, s2] is then the top arc of the rotated curve.
    Raises Discontinuity when the tangent-direction scan does not find
    exactly two crossings (non-convex curve under generic rotation).
    """
    from scipy.optimize import brentq

    phi = float(law.phi(t))
    L = curve.length
    sinp, cosp = math.sin(phi), math.cos(phi)

    def cross(s):  # transversal at both tangency points
        return curve.dx(s) * cosp - curve.dy(s) * sinp

    def align(s):  # +1 at s1, -1 at s2
        return curve.dx(s) * sinp + curve.dy(s) * cosp

    grid = np.linspace(0.0, L, n_scan + 1)
    vals = cross(grid)
    roots = []
    for k in range(n_scan):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(float(grid[k]))
        elif a * b < 0:
            roots.append(float(brentq(cross, grid[k], grid[k + 1], xtol=1e-13)))
    # drop the duplicate of a root sitting exactly at the seam s = 0 == L
    roots = sorted(set(r if r < L - 1e-9 else 0.0 for r in roots))
    if len(roots) != 2:
        raise Discontinuity(f"expected 2 vertical-tangent points, found {len(roots)} at t={t}")

    ups = [r for r in roots if align(r) > 0]
    downs = [r for r in roots if align(r) < 0]
    if len(ups) != 1 or len(downs) != 1:
        raise Discontinuity(f"tangent alignment degenerate at t={t}")
    s1, s2 = ups[0], downs[0]
    if s2 <= s1:
        s2 += L
    return s1, s2


# ---------------------------------------------------------------------------
# Morse chain
# ---------------------------------------------------------------------------

def morse_potential(u):
    """Pair potential 0.5*(1 - exp(-(u-1)))**2."""
    e = np.exp(-(np.asarray(u, dtype=float) - 1.0))
    return 0.5 * (1.0 - e) ** 2


def morse_force(u):
    """Derivative of the pair potential: (1 - e)*e with e = exp(-(u-1))."""
    e = np.exp(-(np.asarray(u, dtype=float) - 1.0))
    return (1.0 - e) * e


@dataclass(frozen=True)
class ChainSpec:
    """Interior particles of an anchored nonlinear chain."""

    n: int
    field: Callable  # F(t, x), broadcasting over x

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one interior particle")

    @property
    def left_anchor(self) -> float:
        return 0.0

    @property
    def right_anchor(self) -> float:
        return 2.0 * (self.n + 1)

    def rest_positions(self) -> np.ndarray:
        return 2.0 * np.arange(1, self.n + 1, dtype=float)


def morse_chain_system(chain: ChainSpec, T) -> SystemSpec:
    """Chain of n particles between fixed anchors with Morse coupling.

    accel_i = V'(x_{i+1} - x_i) - V'(x_i - x_{i-1}) + F(t, x_i), i.e. the
    negative gradient of the total pair potential plus the external field.
    """
    left = chain.left_anchor
    right = chain.right_anchor

    def accel(t, q, qd):
        pad = [(0, 0)] * (q.ndim - 1) + [(1, 1)]
        xs = np.pad(q, pad, constant_values=(left, right))
        gaps = np.diff(xs, axis=-1)
        dV = morse_force(gaps)
        return dV[..., 1:] - dV[..., :-1] + chain.field(t, q)

    return SystemSpec(dim=chain.n, period=float(T), accel=accel, name="morse_chain")


def chain_field_sign_report(chain: ChainSpec, lower, upper, T, n_t: int = 64) -> dict:
    """Check the external field pushes inward at the chain barriers.

    Requires F(t, lower_i) > 0 and F(t, upper_i) < 0 for every particle and
    all sampled t.  Returns a report dict; failure is an outcome, not an
    error.
    """
    ts = np.linspace(0.0, T, n_t, endpoint=False)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    min_left = math.inf
    max_right = -math.inf
    for t in ts:
        min_left = min(min_left, float(np.min(chain.field(t, lower))))
        max_right = max(max_right, float(np.max(chain.field(t, upper))))
    holds = min_left > 0.0 and max_right < 0.0
    return {
        "holds": holds,
        "min_field_at_lower": min_left,
        "max_field_at_upper": max_right,
        "lower": lower.tolist(),
        "upper": upper.tolist(),
    }


# ---------------------------------------------------------------------------
# metric systems
# ---------------------------------------------------------------------------

def geodesic_accel(metric: MetricSpec, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    gamma = metric.christoffel_at(q)
    return -np.einsum("kij,i,j->k", gamma, qd, qd)


def forced_metric_system(metric: MetricSpec, forcing, T, dim: int = 2, growth=None,
                         name="metric", wrap=None, guard=None) -> SystemSpec:
    """System nabla_qd qd = forcing(t, q, qd) in chart coordinates.

    ``guard(q)`` may raise ChartSingularity before evaluation.  Metric
    systems evaluate the connection pointwise; batches fall back to a row
    loop.
    """

    def accel(t, q, qd):
        if q.ndim > 1:
            return np.stack([accel(t, q[i], qd[i]) for i in range(q.shape[0])])
        if guard is not None:
            guard(q)
        v = np.asarray(forcing(t, q, qd), dtype=float)
        return geodesic_accel(metric, q, qd) + v

    return SystemSpec(dim=dim, period=float(T), accel=accel, metric=metric,
                      growth=growth, forcing=forcing, wrap=wrap, name=name,
                      batchable=False)


def geodesic_system(metric: MetricSpec, T: float = 1.0, dim: int = 2, name="geodesic",
                    wrap=None, guard=None) -> SystemSpec:
    """Free motion nabla_qd qd = 0 of the kinetic-energy metric."""
    zero = lambda t, q, qd: np.zeros_like(q)
    return forced_metric_system(metric, zero, T, dim=dim,
                                growth=GrowthBound(0.0, 0.0, 1.0),
                                name=name, wrap=wrap, guard=guard)


def sphere_polar_metric() -> MetricSpec:
    """Unit sphere in polar-angle chart (theta from +e_z, azimuth phi)."""

    def matrix(q):
        th = float(q[0])
        return np.array([[1.0, 0.0], [0.0, math.sin(th) ** 2]])

    def christoffel(q):
        th = float(q[0])
        g = np.zeros((2, 2, 2))
        g[0, 1, 1] = -math.sin(th) * math.cos(th)
        cot = math.cos(th) / math.sin(th)
        g[1, 0, 1] = g[1, 1, 0] = cot
        return g

    return MetricSpec(matrix=matrix, christoffel=christoffel)


def sphere_stereographic_metric() -> MetricSpec:
    """Unit sphere in the chart projecting from the south pole.

    Conformal metric 4/(1 + |q|^2)^2 I; regular at the chart origin (the
    north pole), so geodesics through the pole integrate cleanly.
    """

    def matrix(q):
        r2 = float(np.dot(q, q))
        return (4.0 / (1.0 + r2) ** 2) * np.eye(2)

    def christoffel(q):
        # conformal factor e^{2f} with f = log(2/(1+r^2)); df_i = -2 q_i/(1+r^2)
        q = np.asarray(q, dtype=float)
        r2 = float(np.dot(q, q))
        df = -2.0 * q / (1.0 + r2)
        n = 2
        g = np.zeros((n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    g[k, i, j] = (df[j] if i == k else 0.0) + (df[i] if j == k else 0.0) \
                        - (df[k] if i == j else 0.0)
        return g

    return MetricSpec(matrix=matrix, christoffel=christoffel)


def spherical_pendulum_system(Fx, Fy, T, force_bound, theta_min: float = 1e-3) -> SystemSpec:
    """Spherical pendulum (rod 1, mass 1, g = 1) with horizontal forcing.

    Chart (theta, phi), theta the polar angle from +e_z.  Gravity's
    tangential part is sin(theta) toward larger theta; the forcing
    F = Fx e_x + Fy e_y is projected onto the sphere.  phi is angular
    (wrap 2*pi).  Single trajectories entering theta < theta_min raise
    ChartSingularity; batched rows go NaN and are dropped by the sweep.
    """
    metric = sphere_polar_metric()

    def forcing(t, q, qd):
        th, ph = float(q[0]), float(q[1])
        fx = float(Fx(t, q, qd))
        fy = float(Fy(t, q, qd))
        f_th = math.sin(th) + fx * math.cos(th) * math.cos(ph) + fy * math.cos(th) * math.sin(ph)
        f_ph = (-fx * math.sin(ph) + fy * math.cos(ph)) / math.sin(th)
        return np.array([f_th, f_ph])

    def accel(t, q, qd):
        th = q[..., 0]
        ph = q[..., 1]
        thd = qd[..., 0]
        phd = qd[..., 1]
        bad = th < theta_min
        if np.ndim(th) == 0:
            if bad:
                raise ChartSingularity(f"trajectory entered the polar cap: theta={float(th):.3e}")
        sin_th = np.sin(th)
        cos_th = np.cos(th)
        sin_ph = np.sin(ph)
        cos_ph = np.cos(ph)
        fx = Fx(t, q, qd)
        fy = Fy(t, q, qd)
        with np.errstate(divide="ignore", invalid="ignore"):
            acc_th = sin_th * cos_th * phd ** 2 + sin_th \
                + fx * cos_th * cos_ph + fy * cos_th * sin_ph
            acc_ph = -2.0 * (cos_th / sin_th) * thd * phd \
                + (-fx * sin_ph + fy * cos_ph) / sin_th
        out = np.stack([acc_th, acc_ph], axis=-1)
        if np.ndim(th) > 0 and np.any(bad):
            out[bad] = np.nan
        return out

    growth = GrowthBound(1.0 + float(force_bound), 0.0, 1.0)
    return SystemSpec(dim=2, period=float(T), accel=accel, metric=metric,
                      growth=growth, forcing=forcing,
                      wrap=(None, 2 * math.pi), name="spherical_pendulum",
                      batchable=True)


# ---------------------------------------------------------------------------
# growth checker
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthGrid:
    """Sampling ranges for the growth check."""

    q_low: np.ndarray
    q_high: np.ndarray
    qd_cap: float
    n_t: int = 16
    n_q: int = 16
    n_qd: int = 16
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "q_low", np.atleast_1d(np.asarray(self.q_low, float)))
        object.__setattr__(self, "q_high", np.atleast_1d(np.asarray(self.q_high, float)))


def growth_check(system: SystemSpec, grid: GrowthGrid) -> dict:
    """Verify ||v|| <= a + b ||qd||^(2-delta) on the sampled grid.

    For metric systems the covariant forcing and metric norms are used;
    flat systems use Euclidean norms of the chart acceleration.  Failure is
    a report outcome, not an error.
    """
    if system.growth is None:
        raise ValueError("system carries no growth bound")
    rng = np.random.default_rng(grid.seed)
    ts = np.linspace(0.0, system.period, grid.n_t, endpoint=False)
    worst_margin = math.inf
    worst_sample = None
    for t in ts:
        for _ in range(grid.n_q):
            q = rng.uniform(grid.q_low, grid.q_high)
            for _ in range(grid.n_qd):
                direction = rng.normal(size=system.dim)
                direction /= max(np.linalg.norm(direction), 1e-300)
                speed = grid.qd_cap * rng.uniform() ** 0.5
                if system.metric is not None:
                    nrm = system.metric.norm(q, direction)
                    qd = direction / max(nrm, 1e-300) * speed
                    v = np.asarray(system.forcing(t, q, qd), dtype=float)
                    vnorm = system.metric.norm(q, v)
                    qdnorm = system.metric.norm(q, qd)
                else:
                    qd = direction * speed
                    v = np.asarray(system.accel(t, q, qd), dtype=float)
                    vnorm = float(np.linalg.norm(v))
                    qdnorm = float(np.linalg.norm(qd))
                margin = float(system.growth.bound(qdnorm)) - vnorm
                if margin < worst_margin:
                    worst_margin = margin
                    worst_sample = (float(t), q.copy(), qd.copy())
    return {"holds": worst_margin >= 0.0, "worst_margin": worst_margin,
            "worst_sample": worst_sample}
