"""Periodic segments: time-periodic blocks with classified boundary faces.

A segment is a compact block in extended phase space whose cross-sections at
t = 0 and t = T coincide.  Faces carry closed-form first-order outward rates;
``check_exit_faces`` samples them against the flow, escalating exact
tangencies to a second-order test (derivative of the rate along the flow).
``euler_characteristics`` turns the verified face structure into the
fixed-point index chi(W_0) - chi(exit set).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonProductSegment, SpeedBoundTooSmall, UnresolvedTangency
from .integrate import State
from .systems import MetricSpec, SystemSpec

__all__ = [
    "Face",
    "BarrierPair",
    "RegionSpec",
    "PeriodicSegment",
    "IndexReport",
    "SegmentVerification",
    "cap_split_angle",
    "build_pendulum_segment",
    "build_barrier_segment",
    "build_ball_segment",
    "check_exit_faces",
    "euler_characteristics",
    "cap_region",
    "disk_region",
]

STRICT_TOL = 1e-9  # inner-product sign tolerance; below it the second-order test decides


def cap_split_angle(f, t):
    """Angle in (0, pi) where the speed-cap faces switch between exit and entry.

    Defined by cot(angle) = f(t); continuous in t for continuous f.
    """
    return math.pi / 2 - np.arctan(np.asarray(f(t), dtype=float))


def _fd1(fn, t, h=1e-6):
    return (fn(t + h) - fn(t - h)) / (2 * h)


def _fd2(fn, t, h=1e-5):
    return (fn(t + h) - 2 * fn(t) + fn(t - h)) / (h * h)


@dataclass(frozen=True)
class BarrierPair:
    """Per-coordinate T-periodic barrier functions x1_j(t) < x2_j(t)."""

    lower: tuple
    upper: tuple
    d_lower: tuple = None
    d_upper: tuple = None
    dd_lower: tuple = None
    dd_upper: tuple = None

    def __post_init__(self):
        n = len(self.lower)
        if len(self.upper) != n:
            raise ValueError("lower/upper barrier counts differ")
        if self.d_lower is None:
            object.__setattr__(self, "d_lower", tuple(
                (lambda fn: (lambda t: _fd1(fn, t)))(fn) for fn in self.lower))
        if self.d_upper is None:
            object.__setattr__(self, "d_upper", tuple(
                (lambda fn: (lambda t: _fd1(fn, t)))(fn) for fn in self.upper))
        if self.dd_lower is None:
            object.__setattr__(self, "dd_lower", tuple(
                (lambda fn: (lambda t: _fd2(fn, t)))(fn) for fn in self.lower))
        if self.dd_upper is None:
            object.__setattr__(self, "dd_upper", tuple(
                (lambda fn: (lambda t: _fd2(fn, t)))(fn) for fn in self.upper))

    @property
    def n(self) -> int:
        return len(self.lower)

    @staticmethod
    def constant(lows: Sequence[float], highs: Sequence[float]) -> "BarrierPair":
        lows = [float(v) for v in np.atleast_1d(lows)]
        highs = [float(v) for v in np.atleast_1d(highs)]
        zero = lambda t: 0.0
        return BarrierPair(
            lower=tuple((lambda v: (lambda t: v))(v) for v in lows),
            upper=tuple((lambda v: (lambda t: v))(v) for v in highs),
            d_lower=tuple(zero for _ in lows), d_upper=tuple(zero for _ in highs),
            dd_lower=tuple(zero for _ in lows), dd_upper=tuple(zero for _ in highs))

    def lower_at(self, t):
        return np.array([fn(t) for fn in self.lower], dtype=float)

    def upper_at(self, t):
        return np.array([fn(t) for fn in self.upper], dtype=float)

    def validate(self, T: float, n_t: int = 128, tol: float = 1e-10) -> None:
        ts = np.linspace(0.0, T, n_t)
        for j in range(self.n):
            lo = np.array([self.lower[j](t) for t in ts])
            hi = np.array([self.upper[j](t) for t in ts])
            if np.any(lo >= hi):
                k = int(np.argmax(lo >= hi))
                raise ValueError(
                    f"barrier ordering violated for coordinate {j}: "
                    f"x1(t) < x2(t) fails at t={ts[k]:.6g}")
            for fn, label in ((self.lower[j], "lower"), (self.upper[j], "upper")):
                if abs(fn(0.0) - fn(T)) > tol:
                    raise ValueError(f"{label} barrier {j} not T-periodic within {tol}")


@dataclass(frozen=True)
class RegionSpec:
    """Compact region D with smooth boundary in a metric chart.

    ``gap`` is negative inside D, zero on the boundary, increasing outward.
    """

    gap: Callable
    boundary: Callable          # u in [0,1) -> q on the boundary
    interior: Callable          # (u1,u2) in [0,1]^2 -> q inside D
    metric: MetricSpec
    grad: Callable | None = None
    name: str = "region"

    def grad_at(self, q, h=1e-6):
        if self.grad is not None:
            return np.asarray(self.grad(q), dtype=float)
        q = np.asarray(q, dtype=float)
        g = np.empty(q.size)
        for k in range(q.size):
            e = np.zeros(q.size)
            e[k] = h
            g[k] = (self.gap(q + e) - self.gap(q - e)) / (2 * h)
        return g


def cap_region(theta_cap: float, theta_floor: float = 0.02) -> RegionSpec:
    """Polar-chart spherical cap {theta < theta_cap} around the +e_z pole."""
    from .systems import sphere_polar_metric

    def interior(u):
        u1, u2 = u
        th = theta_floor + (theta_cap - theta_floor) * u1 * 0.98
        return np.array([th, 2 * math.pi * u2])

    return RegionSpec(
        gap=lambda q: float(q[0]) - theta_cap,
        boundary=lambda u: np.array([theta_cap, 2 * math.pi * float(u)]),
        interior=interior,
        metric=sphere_polar_metric(),
        grad=lambda q: np.array([1.0, 0.0]),
        name="polar_cap",
    )


def disk_region(radius: float, metric: MetricSpec | None = None) -> RegionSpec:
    """Disk of given chart radius around the origin."""
    from .systems import flat_metric

    def interior(u):
        u1, u2 = u
        r = radius * math.sqrt(u1) * 0.995
        a = 2 * math.pi * u2
        return np.array([r * math.cos(a), r * math.sin(a)])

    def grad(q):
        r = float(np.linalg.norm(q))
        return q / r if r > 1e-12 else np.array([1.0, 0.0])

    return RegionSpec(
        gap=lambda q: float(np.linalg.norm(q)) - radius,
        boundary=lambda u: radius * np.array([math.cos(2 * math.pi * float(u)),
                                              math.sin(2 * math.pi * float(u))]),
        interior=interior,
        metric=metric or flat_metric(2),
        grad=grad,
        name="disk",
    )


@dataclass
class Face:
    """One boundary face: parametrized points plus the outward rate law.

    ``axes`` controls sampling per parameter axis: "closed" includes both
    endpoints (tangency edges belong to exit faces), "open0" drops u = 0,
    and "centered" keeps samples strictly inside (free axes, entry faces).
    ``rate`` is the first-order outward rate of the boundary function along
    the extended flow (1, qd, accel).
    """

    id: str
    pre_mark: str
    param_dim: int
    point: Callable            # (t, u) -> (q, qd)
    rate: Callable             # (system, t, q, qd) -> float
    axes: tuple = ()
    endpoints: Callable | None = None   # t -> [(x_j, v_j), (x_j, v_j)] in the coord plane
    coord: int | None = None
    note: str = ""
    classification: str = field(default="unresolved")

    def __post_init__(self):
        if not self.axes:
            self.axes = ("closed",) * self.param_dim
        if self.pre_mark not in ("exit", "entry"):
            raise ValueError(f"bad pre_mark {self.pre_mark!r}")

    def axis_grid(self, mode: str, m: int) -> np.ndarray:
        if mode == "closed":
            return np.linspace(0.0, 1.0, m)
        if mode == "open0":
            return np.arange(1, m + 1) / m
        if mode == "centered":
            return (np.arange(m) + 0.5) / m
        raise ValueError(mode)

    def sample_params(self, n_target: int) -> np.ndarray:
        """Grid of parameter vectors with roughly n_target points."""
        k = self.param_dim
        if k == 0:
            return np.zeros((1, 0))
        m = max(2, int(round(n_target ** (1.0 / k))))
        grids = [self.axis_grid(mode, m) for mode in self.axes]
        mesh = np.meshgrid(*grids, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass
class PeriodicSegment:
    """Time-periodic block with classified boundary faces."""

    period: float
    dim: int
    kind: str                       # "box" | "ball"
    faces: list
    speed_cap: float
    barriers: BarrierPair | None = None
    region: RegionSpec | None = None
    product_like: bool = True
    notes: dict = field(default_factory=dict)

    def face(self, face_id: str) -> Face:
        for f in self.faces:
            if f.id == face_id:
                return f
        raise KeyError(face_id)

    def exit_faces(self):
        return [f for f in self.faces if f.pre_mark == "exit"]

    # --- geometry helpers -------------------------------------------------

    def margins(self, t: float, state: State) -> np.ndarray:
        """Positive means strictly inside; one entry per one-sided bound."""
        if self.kind == "box":
            lo = self.barriers.lower_at(t)
            hi = self.barriers.upper_at(t)
            return np.concatenate([
                state.q - lo,
                hi - state.q,
                self.speed_cap - np.abs(state.qd),
            ])
        gap = self.region.gap(state.q)
        energy = self.region.metric.energy(state.q, state.qd)
        return np.array([-gap, self.speed_cap - energy])

    def contains(self, t: float, state: State, tol: float = 0.0) -> bool:
        return bool(np.all(self.margins(t, state) >= -tol))

    def interior_points(self, counts) -> list[State]:
        """Grid of interior states for multistart shooting."""
        if self.kind == "box":
            n = self.dim
            counts = list(np.broadcast_to(counts, (2 * n,)).astype(int))
            lo, hi = self.barriers.lower_at(0.0), self.barriers.upper_at(0.0)
            axes = []
            for j in range(n):
                c = counts[j]
                fr = (np.arange(c) + 1) / (c + 1)
                axes.append(lo[j] + fr * (hi[j] - lo[j]))
            for j in range(n):
                c = counts[n + j]
                fr = (np.arange(c) + 1) / (c + 1)
                axes.append(-self.speed_cap + fr * 2 * self.speed_cap)
            mesh = np.meshgrid(*axes, indexing="ij")
            flat = np.stack([g.ravel() for g in mesh], axis=1)
            return [State(row[:n], row[n:]) for row in flat]
        counts = list(np.broadcast_to(counts, (4,)).astype(int))
        n1, n2, nd, ns = counts
        pts = []
        for i1 in range(n1):
            for i2 in range(n2):
                q = self.region.interior(((i1 + 0.5) / n1, (i2 + 0.5) / n2))
                A = self.region.metric.matrix_at(q)
                L = np.linalg.cholesky(np.linalg.inv(A))
                for kd in range(nd):
                    ang = 2 * math.pi * kd / nd
                    direction = L @ np.array([math.cos(ang), math.sin(ang)])
                    for ks in range(ns):
                        energy = self.speed_cap * (ks + 0.5) / ns * 0.8
                        speed = math.sqrt(2 * energy)
                        pts.append(State(q, direction * speed))
        return pts

    def inner_contour(self, frac: float = 0.08) -> np.ndarray:
        """Rectangle just inside W_0 minus an exit collar (1-DOF only)."""
        if self.kind != "box" or self.dim != 1:
            raise ValueError("inner_contour is for 1-DOF box segments")
        lo = float(self.barriers.lower_at(0.0)[0])
        hi = float(self.barriers.upper_at(0.0)[0])
        p = self.speed_cap
        dq = frac * (hi - lo)
        dv = frac * 2 * p
        return np.array([
            [lo + dq, -p + dv],
            [hi - dq, -p + dv],
            [hi - dq, p - dv],
            [lo + dq, p - dv],
        ])

    def cross_section_matches(self, tol: float = 1e-10) -> bool:
        if self.kind == "box":
            a = np.concatenate([self.barriers.lower_at(0.0), self.barriers.upper_at(0.0)])
            b = np.concatenate([self.barriers.lower_at(self.period), self.barriers.upper_at(self.period)])
            return bool(np.max(np.abs(a - b)) <= tol)
        return True  # ball regions are time-independent by construction


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_pendulum_segment(f, p: float, T: float) -> PeriodicSegment:
    """Block [0,T] x [0,pi] x [-p,p] for q'' = f(t) sin q - cos q.

    Walls at q = 0 (velocities <= 0) and q = pi (velocities >= 0) are exit
    faces; the speed caps split at the angle where cot = f(t): the top cap
    exits on [split, pi], the bottom cap on [0, split].
    """
    if p <= 0:
        raise ValueError("speed cap must be positive")
    gamma = lambda t: float(cap_split_angle(f, t))
    barriers = BarrierPair.constant([0.0], [math.pi])

    def wall_rate_right(system, t, q, qd):   # boundary fn b = -q
        return -float(qd[0])

    def wall_rate_left(system, t, q, qd):    # b = q - pi
        return float(qd[0])

    def cap_rate_top(system, t, q, qd):      # b = qd - p
        return float(np.asarray(system.accel(t, q, qd))[0])

    def cap_rate_bottom(system, t, q, qd):   # b = -qd - p
        return -float(np.asarray(system.accel(t, q, qd))[0])

    faces = [
        Face(id="wall.right.exit", pre_mark="exit", param_dim=1,
             point=lambda t, u: (np.array([0.0]), np.array([-p * (1 - u[0])])),
             rate=wall_rate_right, axes=("closed",), coord=0,
             endpoints=lambda t: [(0.0, -p), (0.0, 0.0)]),
        Face(id="wall.right.entry", pre_mark="entry", param_dim=1,
             point=lambda t, u: (np.array([0.0]), np.array([p * u[0]])),
             rate=wall_rate_right, axes=("centered",), coord=0,
             endpoints=lambda t: [(0.0, 0.0), (0.0, p)]),
        Face(id="wall.left.exit", pre_mark="exit", param_dim=1,
             point=lambda t, u: (np.array([math.pi]), np.array([p * u[0]])),
             rate=wall_rate_left, axes=("closed",), coord=0,
             endpoints=lambda t: [(math.pi, 0.0), (math.pi, p)]),
        Face(id="wall.left.entry", pre_mark="entry", param_dim=1,
             point=lambda t, u: (np.array([math.pi]), np.array([-p * u[0]])),
             rate=wall_rate_left, axes=("centered",), coord=0,
             endpoints=lambda t: [(math.pi, -p), (math.pi, 0.0)]),
        Face(id="cap.top.exit", pre_mark="exit", param_dim=1,
             point=lambda t, u: (np.array([gamma(t) + (math.pi - gamma(t)) * u[0]]),
                                 np.array([p])),
             rate=cap_rate_top, axes=("closed",), coord=0,
             endpoints=lambda t: [(gamma(t), p), (math.pi, p)],
             note="exit on [split(t), pi]"),
        Face(id="cap.top.entry", pre_mark="entry", param_dim=1,
             point=lambda t, u: (np.array([gamma(t) * u[0]]), np.array([p])),
             rate=cap_rate_top, axes=("centered",), coord=0,
             endpoints=lambda t: [(0.0, p), (gamma(t), p)]),
        Face(id="cap.bottom.exit", pre_mark="exit", param_dim=1,
             point=lambda t, u: (np.array([gamma(t) * u[0]]), np.array([-p])),
             rate=cap_rate_bottom, axes=("closed",), coord=0,
             endpoints=lambda t: [(0.0, -p), (gamma(t), -p)],
             note="exit on [0, split(t)]"),
        Face(id="cap.bottom.entry", pre_mark="entry", param_dim=1,
             point=lambda t, u: (np.array([gamma(t) + (math.pi - gamma(t)) * u[0]]),
                                 np.array([-p])),
             rate=cap_rate_bottom, axes=("centered",), coord=0,
             endpoints=lambda t: [(gamma(t), -p), (math.pi, -p)]),
    ]
    return PeriodicSegment(period=float(T), dim=1, kind="box", faces=faces,
                           speed_cap=float(p), barriers=barriers,
                           notes={"split_angle": gamma, "style": "pendulum"})


def _box_face_point(barriers, p, j, n, kind):
    """Parametrization factory for coordinate-j wall/cap faces of an n-box.

    Free axes come in pairs (position, velocity) for every other coordinate,
    appended after the face's own parameter.
    """

    def fill_others(t, u, q, qd):
        idx = 1
        for k in range(n):
            if k == j:
                continue
            lo = barriers.lower[k](t)
            hi = barriers.upper[k](t)
            q[k] = lo + (hi - lo) * u[idx]
            qd[k] = -p + 2 * p * u[idx + 1]
            idx += 2

    def point(t, u):
        q = np.empty(n)
        qd = np.empty(n)
        if kind == "wall.lower.exit":
            q[j] = barriers.lower[j](t)
            v1 = barriers.d_lower[j](t)
            qd[j] = v1 - (v1 + p) * u[0]         # from tangency down to -p
        elif kind == "wall.lower.entry":
            q[j] = barriers.lower[j](t)
            v1 = barriers.d_lower[j](t)
            qd[j] = v1 + (p - v1) * u[0]
        elif kind == "wall.upper.exit":
            q[j] = barriers.upper[j](t)
            v2 = barriers.d_upper[j](t)
            qd[j] = v2 + (p - v2) * u[0]         # from tangency up to +p
        elif kind == "wall.upper.entry":
            q[j] = barriers.upper[j](t)
            v2 = barriers.d_upper[j](t)
            qd[j] = v2 - (v2 + p) * u[0]
        elif kind == "cap.upper":
            lo, hi = barriers.lower[j](t), barriers.upper[j](t)
            q[j] = lo + (hi - lo) * u[0]
            qd[j] = p
        elif kind == "cap.lower":
            lo, hi = barriers.lower[j](t), barriers.upper[j](t)
            q[j] = lo + (hi - lo) * u[0]
            qd[j] = -p
        else:
            raise ValueError(kind)
        fill_others(t, u, q, qd)
        return q, qd

    return point


def build_barrier_segment(barriers: BarrierPair, p: float, T: float) -> PeriodicSegment:
    """Block with moving barrier walls and speed caps +-p per coordinate.

    Wall faces split at the tangency curves qd_j = dx_i/dt: below the lower
    tangency (resp. above the upper) the flow crosses out transversally.
    Speed caps are pre-marked entry: they are classified against the
    cutoff-modified system, whose synthetic friction pulls the speed band
    inward.
    """
    barriers.validate(T)
    n = barriers.n
    ts = np.linspace(0.0, T, 64)
    slope = 0.0
    for j in range(n):
        for t in ts:
            slope = max(slope, abs(barriers.d_lower[j](t)), abs(barriers.d_upper[j](t)))
    if p <= slope:
        raise SpeedBoundTooSmall(f"speed cap {p} must exceed max barrier slope {slope:.3g}")

    free_axes = tuple(x for _ in range(n - 1) for x in ("centered", "centered"))
    faces = []
    for j in range(n):
        sfx = f"[{j}]" if n > 1 else ""

        def lower_rate(system, t, q, qd, j=j):   # b = x1_j(t) - x_j
            return float(barriers.d_lower[j](t) - qd[j])

        def upper_rate(system, t, q, qd, j=j):   # b = x_j - x2_j(t)
            return float(qd[j] - barriers.d_upper[j](t))

        def cap_up_rate(system, t, q, qd, j=j):  # b = qd_j - p
            return float(np.asarray(system.accel(t, q, qd))[j])

        def cap_dn_rate(system, t, q, qd, j=j):  # b = -qd_j - p
            return -float(np.asarray(system.accel(t, q, qd))[j])

        def ends(t, j=j, which="lower", sub="exit"):
            x = barriers.lower[j](t) if which == "lower" else barriers.upper[j](t)
            v = barriers.d_lower[j](t) if which == "lower" else barriers.d_upper[j](t)
            if which == "lower":
                return [(x, -p), (x, v)] if sub == "exit" else [(x, v), (x, p)]
            return [(x, v), (x, p)] if sub == "exit" else [(x, -p), (x, v)]

        faces.extend([
            Face(id=f"wall.lower.exit{sfx}", pre_mark="exit", param_dim=1 + 2 * (n - 1),
                 point=_box_face_point(barriers, p, j, n, "wall.lower.exit"),
                 rate=lower_rate, axes=("closed",) + free_axes, coord=j,
                 endpoints=lambda t, j=j: ends(t, j, "lower", "exit")),
            Face(id=f"wall.lower.entry{sfx}", pre_mark="entry", param_dim=1 + 2 * (n - 1),
                 point=_box_face_point(barriers, p, j, n, "wall.lower.entry"),
                 rate=lower_rate, axes=("open0",) + free_axes, coord=j,
                 endpoints=lambda t, j=j: ends(t, j, "lower", "entry")),
            Face(id=f"wall.upper.exit{sfx}", pre_mark="exit", param_dim=1 + 2 * (n - 1),
                 point=_box_face_point(barriers, p, j, n, "wall.upper.exit"),
                 rate=upper_rate, axes=("closed",) + free_axes, coord=j,
                 endpoints=lambda t, j=j: ends(t, j, "upper", "exit")),
            Face(id=f"wall.upper.entry{sfx}", pre_mark="entry", param_dim=1 + 2 * (n - 1),
                 point=_box_face_point(barriers, p, j, n, "wall.upper.entry"),
                 rate=upper_rate, axes=("open0",) + free_axes, coord=j,
                 endpoints=lambda t, j=j: ends(t, j, "upper", "entry")),
            Face(id=f"cap.upper{sfx}", pre_mark="entry", param_dim=1 + 2 * (n - 1),
                 point=_box_face_point(barriers, p, j, n, "cap.upper"),
                 rate=cap_up_rate, axes=("centered",) + free_axes, coord=j,
                 endpoints=lambda t, j=j: [(barriers.lower[j](t), p), (barriers.upper[j](t), p)],
                 note="classified against the cutoff-modified system"),
            Face(id=f"cap.lower{sfx}", pre_mark="entry", param_dim=1 + 2 * (n - 1),
                 point=_box_face_point(barriers, p, j, n, "cap.lower"),
                 rate=cap_dn_rate, axes=("centered",) + free_axes, coord=j,
                 endpoints=lambda t, j=j: [(barriers.lower[j](t), -p), (barriers.upper[j](t), -p)],
                 note="classified against the cutoff-modified system"),
        ])
    return PeriodicSegment(period=float(T), dim=n, kind="box", faces=faces,
                           speed_cap=float(p), barriers=barriers,
                           notes={"style": "barriers"})


def build_ball_segment(region: RegionSpec, p: float, T: float) -> PeriodicSegment:
    """Block D-bar x {kinetic energy <= p} over [0, T] for a metric system.

    The boundary splits into the side (q on the region boundary) and the
    energy cap.  Side points with outward or tangent velocity are pre-marked
    exit; the cap is pre-marked entry (cutoff-modified system).  The solid
    energy ball is used, so the t = 0 section is contractible.
    """
    metric = region.metric

    def frame(q):
        """Metric-orthonormal (outward, tangent) velocity frame at a boundary point."""
        g = region.grad_at(q)
        A = metric.matrix_at(q)
        n_vec = np.linalg.solve(A, g)
        n_vec = n_vec / metric.norm(q, n_vec)
        t_vec = np.array([-g[1], g[0]])
        t_vec = t_vec / metric.norm(q, t_vec)
        return n_vec, t_vec

    def side_point(t, u, half):
        q = region.boundary(u[0])
        n_vec, t_vec = frame(q)
        if half == "exit":
            psi = math.pi * (u[1] - 0.5)        # [-pi/2, pi/2]: outward + tangent
        else:
            psi = math.pi / 2 + math.pi * u[1]  # strictly inward
        energy = max(p * u[2], 1e-12 * p)
        speed = math.sqrt(2 * energy)
        qd = speed * (math.cos(psi) * n_vec + math.sin(psi) * t_vec)
        return q, qd

    def side_rate(system, t, q, qd):
        return float(region.grad_at(q) @ qd)

    def cap_point(t, u):
        q = region.interior((u[0], u[1]))
        A = metric.matrix_at(q)
        L = np.linalg.cholesky(np.linalg.inv(A))
        ang = 2 * math.pi * u[2]
        direction = L @ np.array([math.cos(ang), math.sin(ang)])
        qd = direction * math.sqrt(2 * p)
        return q, qd

    def cap_rate(system, t, q, qd):
        if system.forcing is None:
            raise ValueError("energy-cap rate needs the covariant forcing")
        A = metric.matrix_at(q)
        return float(qd @ A @ np.asarray(system.forcing(t, q, qd)))

    faces = [
        Face(id="side.exit", pre_mark="exit", param_dim=3,
             point=lambda t, u: side_point(t, u, "exit"),
             rate=side_rate, axes=("centered", "closed", "closed")),
        Face(id="side.entry", pre_mark="entry", param_dim=3,
             point=lambda t, u: side_point(t, u, "entry"),
             rate=side_rate, axes=("centered", "centered", "centered")),
        Face(id="cap", pre_mark="entry", param_dim=3,
             point=cap_point, rate=cap_rate,
             axes=("centered", "centered", "centered"),
             note="classified against the cutoff-modified system"),
    ]
    return PeriodicSegment(period=float(T), dim=2, kind="ball", faces=faces,
                           speed_cap=float(p), region=region,
                           notes={"style": "ball"})


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def _rk4_micro(system, t, q, qd, h):
    y = np.concatenate([q, qd])
    d = q.size

    def f(tt, yy):
        return np.concatenate([yy[d:], np.asarray(system.accel(tt, yy[:d], yy[d:]))])

    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    y1 = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y1[:d], y1[d:]


def _second_order_rate(system, face, t, q, qd, h=1e-5):
    """d(rate)/dt along the flow, central difference with micro RK4 steps."""
    qf, qdf = _rk4_micro(system, t, q, qd, h)
    qb, qdb = _rk4_micro(system, t, q, qd, -h)
    rf = face.rate(system, t + h, qf, qdf)
    rb = face.rate(system, t - h, qb, qdb)
    return (rf - rb) / (2 * h)


@dataclass
class FaceReport:
    face_id: str
    pre_mark: str
    n_samples: int = 0
    n_tangent: int = 0
    min_rate: float = math.inf          # sign-adjusted first-order margin
    min_second: float = math.inf        # sign-adjusted second-order margin at tangencies
    n_wrong: int = 0
    unresolved: list = field(default_factory=list)
    ok: bool = True

    def as_dict(self):
        return {
            "face": self.face_id,
            "pre_mark": self.pre_mark,
            "samples": self.n_samples,
            "tangent_samples": self.n_tangent,
            "min_first_order_margin": None if math.isinf(self.min_rate) else self.min_rate,
            "min_second_order_margin": None if math.isinf(self.min_second) else self.min_second,
            "wrong_side_samples": self.n_wrong,
            "unresolved_samples": len(self.unresolved),
            "ok": self.ok,
        }


@dataclass
class SegmentVerification:
    passed: bool
    faces: dict
    n_t: int
    samples_per_face: int
    rows: list = field(default_factory=list)   # (face_id, t, q..., qd..., class, rate)

    def to_json(self) -> str:
        return json.dumps({
            "passed": self.passed,
            "time_samples": self.n_t,
            "samples_per_face": self.samples_per_face,
            "faces": {k: v.as_dict() for k, v in self.faces.items()},
        }, indent=2, sort_keys=True)

    def boundary_rows(self):
        return self.rows


def check_exit_faces(system: SystemSpec, segment: PeriodicSegment,
                     n_samples: int = 200, n_t: int = 24,
                     strict_tol: float = STRICT_TOL,
                     on_unresolved: str = "raise") -> SegmentVerification:
    """Sample every face against the extended flow and classify it.

    Exit faces must show strictly positive outward rate at every sample,
    or a strictly positive second-order rate where the first order vanishes;
    entry faces the mirror image.  Tangencies unresolved at both orders
    raise UnresolvedTangency (or are collected with on_unresolved="report").
    """
    reports = {}
    rows = []
    unresolved_total = []
    ts = np.linspace(0.0, segment.period, n_t, endpoint=False)
    for face in segment.faces:
        rep = FaceReport(face.id, face.pre_mark)
        sign = 1.0 if face.pre_mark == "exit" else -1.0
        params = face.sample_params(max(4, n_samples // n_t))
        for t in ts:
            for u in params:
                q, qd = face.point(float(t), u)
                r = face.rate(system, float(t), q, qd)
                rep.n_samples += 1
                if abs(r) > strict_tol:
                    margin = sign * r
                    if margin < 0:
                        rep.n_wrong += 1
                        rep.ok = False
                    rep.min_rate = min(rep.min_rate, margin)
                    cls = "transversal"
                else:
                    r2 = _second_order_rate(system, face, float(t), q, qd)
                    rep.n_tangent += 1
                    if abs(r2) <= strict_tol:
                        rep.unresolved.append((float(t), q.copy(), qd.copy()))
                        rep.ok = False
                        cls = "unresolved"
                    else:
                        margin2 = sign * r2
                        if margin2 < 0:
                            rep.n_wrong += 1
                            rep.ok = False
                        rep.min_second = min(rep.min_second, margin2)
                        cls = "tangent"
                rows.append((face.id, float(t), *q.tolist(), *qd.tolist(),
                             face.pre_mark, cls, r))
        face.classification = face.pre_mark if rep.ok else (
            "unresolved" if rep.unresolved else "mixed")
        reports[face.id] = rep
        unresolved_total.extend(rep.unresolved)

    if unresolved_total and on_unresolved == "raise":
        t0, q0, qd0 = unresolved_total[0]
        raise UnresolvedTangency(
            f"{len(unresolved_total)} boundary samples unresolved at both orders; "
            f"first at t={t0:.6g}, q={q0}, qd={qd0}")

    passed = all(rep.ok for rep in reports.values())
    return SegmentVerification(passed=passed, faces=reports, n_t=n_t,
                               samples_per_face=len(params) * n_t, rows=rows)


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexReport:
    chi_section: int
    chi_exit: int
    index: int
    exit_components: int
    detail: str = ""

    def as_dict(self):
        return {"chi_section": self.chi_section, "chi_exit": self.chi_exit,
                "index": self.index, "exit_components": self.exit_components,
                "detail": self.detail}


def _arc_components(faces, t, tol=1e-9):
    """Union-find on exit arcs of one coordinate's section circle."""
    if not faces:
        return 0
    ends = [f.endpoints(t) for f in faces]
    parent = list(range(len(faces)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(faces)):
        for j in range(i + 1, len(faces)):
            close = any(
                abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol
                for a in ends[i] for b in ends[j])
            if close:
                parent[find(i)] = find(j)
    return len({find(i) for i in range(len(faces))})


def euler_characteristics(segment: PeriodicSegment) -> IndexReport:
    """Index of the period map from the verified exit-set topology.

    Box segments: per-coordinate exit arcs on the section circle combine by
    the product formula index = prod_j (1 - c_j); chi(exit) = 1 - index.
    Ball segments: the exit set is sphere-like, chi = 1 + (-1)^(dim-1).
    """
    for f in segment.faces:
        if f.classification == "unresolved":
            raise ValueError(f"face {f.id} unclassified; run check_exit_faces first")
    if not segment.cross_section_matches():
        raise NonProductSegment("cross-sections at t=0 and t=T differ")

    if segment.kind == "ball":
        chi_exit = 1 + (-1) ** (segment.dim - 1)
        index = 1 - chi_exit
        return IndexReport(1, chi_exit, index, 1,
                           detail=f"exit set sphere-like for dim={segment.dim}")

    # component counts must be stable across the period (product-like check)
    counts = {}
    for j in range(segment.dim):
        faces_j = [f for f in segment.exit_faces()
                   if f.coord == j and f.classification == "exit"]
        cs = [_arc_components(faces_j, t) for t in
              (0.0, 0.25 * segment.period, 0.5 * segment.period, segment.period)]
        if len(set(cs)) != 1:
            raise NonProductSegment(
                f"exit-arc count for coordinate {j} changes over the period: {cs}")
        counts[j] = cs[0]

    index = 1
    for j in range(segment.dim):
        index *= (1 - counts[j])
    chi_exit = 1 - index
    active = [c for c in counts.values() if c > 0]
    if segment.dim == 1:
        components = counts[0]
    elif len(active) == 0:
        components = 0
    elif len(active) == 1:
        components = active[0]
    else:
        components = 1
    return IndexReport(1, chi_exit, index, components,
                       detail=f"per-coordinate exit arcs: {counts}")
