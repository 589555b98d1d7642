"""Velocity cutoff construction and high-speed escape experiments.

The cutoff freezes the forcing and injects synthetic friction inside a
velocity band so a segment's speed caps become harmless; the experiments
here verify that band trajectories actually flee the barrier slab, and the
geodesic-tracking demo measures how fast rescaled trajectories approach the
free (geodesic) motion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ChartExit, ChartSingularity, NoEscape, ScheduleExhausted
from .integrate import EventSpec, IntegratorConfig, State, integrate, integrate_until
from .systems import MetricSpec, SystemSpec, forced_metric_system, geodesic_system

__all__ = [
    "CutoffProfile",
    "cutoff_factor",
    "apply_speed_cutoff",
    "EscapeReport",
    "escape_experiment",
    "select_cutoff_speed",
    "geodesic_tracking",
    "escape_time_bound",
]


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth velocity switch parameters.

    The factor is 1 below speed - width and beyond speed + width, 0 on the
    inner half-band [speed - width/2, speed + width/2], with monotone C^2
    quintic transitions between.  ``friction`` scales the synthetic -mu*qd
    term active where the factor is below 1.
    """

    speed: float
    width: float
    friction: float
    degree: int = 5

    def __post_init__(self):
        if not self.speed > self.width > 0:
            raise ValueError("need speed > width > 0")
        if self.friction <= 0:
            raise ValueError("friction must be positive")

    @property
    def band(self) -> tuple[float, float]:
        return (self.speed - self.width, self.speed + self.width)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


def cutoff_factor(profile: CutoffProfile, speed):
    """Cutoff factor in [0, 1] as a function of |velocity| (or band value)."""
    s = np.asarray(speed, dtype=float)
    p, e = profile.speed, profile.width
    out = np.ones_like(s)
    lo_trans = (s > p - e) & (s < p - e / 2)
    out = np.where(lo_trans, 1.0 - _smoothstep((s - (p - e)) / (e / 2)), out)
    out = np.where((s >= p - e / 2) & (s <= p + e / 2), 0.0, out)
    hi_trans = (s > p + e / 2) & (s < p + e)
    out = np.where(hi_trans, _smoothstep((s - (p + e / 2)) / (e / 2)), out)
    if np.ndim(speed) == 0:
        return float(out)
    return out


def apply_speed_cutoff(system: SystemSpec, profile: CutoffProfile) -> SystemSpec:
    """Mix the field with synthetic friction inside the velocity band.

    Flat systems get a componentwise band (|qd_j| drives equation j), which
    keeps every speed cap of a box segment inflowing regardless of the other
    coordinates.  Metric systems use the kinetic energy as the band variable
    so the energy cap obeys dE/dt = -2*mu*E*(1-chi) < 0 on the band.
    """
    mu = profile.friction
    if system.metric is None:
        base = system.accel

        def accel(t, q, qd):
            chi = cutoff_factor(profile, np.abs(qd))
            return base(t, q, qd) * chi - mu * qd * (1.0 - chi)

        return SystemSpec(dim=system.dim, period=system.period, accel=accel,
                          growth=system.growth, wrap=system.wrap,
                          name=system.name + "+cutoff", batchable=system.batchable)

    if system.forcing is None:
        raise ValueError("metric system lacks covariant forcing")
    metric = system.metric
    base_forcing = system.forcing

    def forcing(t, q, qd):
        chi = cutoff_factor(profile, metric.energy(q, qd))
        return np.asarray(base_forcing(t, q, qd)) * chi - mu * qd * (1.0 - chi)

    return forced_metric_system(metric, forcing, system.period, dim=system.dim,
                                growth=system.growth, name=system.name + "+cutoff",
                                wrap=system.wrap)


@dataclass
class EscapeReport:
    """Outcome of the high-speed slab-escape experiment."""

    tested: int
    escaped: int
    max_escape_time: float
    worst_case: dict | None
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.tested > 0 and self.escaped == self.tested

    def as_dict(self):
        return {"tested": self.tested, "escaped": self.escaped,
                "max_escape_time": self.max_escape_time,
                "passed": self.passed, "worst_case": self.worst_case}


def _slab_events(j: int, lo: float, hi: float):
    return [
        EventSpec(guard=lambda t, s, j=j, lo=lo: s.q[j] - lo, direction="falling", terminal=True),
        EventSpec(guard=lambda t, s, j=j, hi=hi: s.q[j] - hi, direction="rising", terminal=True),
    ]


def escape_experiment(system: SystemSpec, segment, profile: CutoffProfile,
                      n_samples: int = 48, t_max: float = 1.0,
                      cfg: IntegratorConfig | None = None,
                      rng: np.random.Generator | None = None) -> EscapeReport:
    """Check that band-speed starts flee the barrier slab before t_max.

    Initial conditions sit on the barrier cross-section with the tested
    coordinate's speed inside [p - eps, p + eps] (both signs).  The original
    system must leave the widened slab [x^- - 1, x^+ + 1]; the modified one
    must leave the plain slab [x^-, x^+].
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-8, abs_tol=1e-8)
    if segment.kind != "box":
        raise ValueError("escape experiment runs on box segments")
    rng = rng or np.random.default_rng(0)
    modified = apply_speed_cutoff(system, profile)
    n = segment.dim
    T = segment.period
    p, e = profile.speed, profile.width

    ts_grid = np.linspace(0.0, T, max(2, n_samples // (n * 8)), endpoint=False)
    speeds = np.array([p - e, p, p + e])
    rows = []
    tested = escaped = 0
    max_time = 0.0
    worst = None

    lo_min = np.array([min(segment.barriers.lower[j](t) for t in np.linspace(0, T, 65))
                       for j in range(n)])
    hi_max = np.array([max(segment.barriers.upper[j](t) for t in np.linspace(0, T, 65))
                       for j in range(n)])

    for j in range(n):
        for t0 in ts_grid:
            lo_j = segment.barriers.lower[j](t0)
            hi_j = segment.barriers.upper[j](t0)
            mid = segment.barriers.lower_at(t0) * 0.5 + segment.barriers.upper_at(t0) * 0.5
            for frac in (0.15, 0.5, 0.85):
                x_j = lo_j + frac * (hi_j - lo_j)
                for sgn in (-1.0, 1.0):
                    for sp in speeds:
                        q = mid.copy()
                        q[j] = x_j
                        qd = np.zeros(n)
                        qd[j] = sgn * sp
                        s0 = State(q, qd)
                        tested += 1
                        t_orig = _escape_time(system, t0, s0, j,
                                              lo_min[j] - 1.0, hi_max[j] + 1.0, t_max, cfg)
                        t_mod = _escape_time(modified, t0, s0, j,
                                             lo_min[j], hi_max[j], t_max, cfg)
                        ok = t_orig is not None and t_mod is not None
                        if ok:
                            escaped += 1
                            worst_t = max(t_orig, t_mod)
                            if worst_t > max_time:
                                max_time = worst_t
                                worst = {"t0": float(t0), "coord": j,
                                         "q": q.tolist(), "qd": qd.tolist(),
                                         "escape_time": worst_t}
                        else:
                            worst = {"t0": float(t0), "coord": j, "q": q.tolist(),
                                     "qd": qd.tolist(), "escape_time": None}
                        rows.append((float(t0), j, *q.tolist(), *qd.tolist(),
                                     -1.0 if t_orig is None else t_orig,
                                     -1.0 if t_mod is None else t_mod, int(ok)))
    return EscapeReport(tested=tested, escaped=escaped, max_escape_time=max_time,
                        worst_case=worst, rows=rows)


def _escape_time(system, t0, s0, j, lo, hi, t_max, cfg):
    events = _slab_events(j, lo, hi)
    try:
        _, hits = integrate_until(system, float(t0), s0, events, float(t0) + t_max, cfg)
    except Exception:
        return None
    if not hits:
        return None
    return float(hits[0][1]) - float(t0)


def select_cutoff_speed(system: SystemSpec, segment, eps: float,
                        schedule: Sequence[float], t_max: float,
                        friction: float = 0.1, n_samples: int = 48,
                        cfg: IntegratorConfig | None = None):
    """Smallest scheduled cutoff speed whose escape experiment passes.

    Runs the whole schedule and returns ``(p_star, table)`` where the table
    records every (p, report) pair; raises ScheduleExhausted when nothing
    passes.
    """
    if list(schedule) != sorted(schedule):
        raise ValueError("schedule must be increasing")
    table = []
    p_star = None
    for p in schedule:
        profile = CutoffProfile(speed=float(p), width=float(eps), friction=friction)
        report = escape_experiment(system, segment, profile,
                                   n_samples=n_samples, t_max=t_max, cfg=cfg)
        table.append((float(p), report))
        if report.passed and p_star is None:
            p_star = float(p)
    if p_star is None:
        raise ScheduleExhausted(f"no cutoff speed in {list(schedule)} passed")
    return p_star, table


def geodesic_tracking(metric: MetricSpec, forcing, q0, qd0, T_geo: float,
                      lambdas: Sequence[float], dim: int = 2,
                      cfg: IntegratorConfig | None = None) -> list[dict]:
    """Deviation between forced and free motion at rescaled launch speeds.

    For each factor lam, both systems start at (q0, lam*qd0) and run for
    time T_geo/lam; the row records the sup over a dense grid of the chart
    distance between the two solutions.
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-12, abs_tol=1e-12)
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    qd0 = np.atleast_1d(np.asarray(qd0, dtype=float))
    period = max(float(T_geo), 1.0)
    free = geodesic_system(metric, T=period, dim=dim)
    pert = forced_metric_system(metric, forcing, period, dim=dim)
    rows = []
    for lam in lambdas:
        lam = float(lam)
        span = T_geo / lam
        s0 = State(q0, lam * qd0)
        try:
            tr_p = integrate(pert, 0.0, s0, span, cfg)
            tr_g = integrate(free, 0.0, s0, span, cfg)
        except ChartSingularity as exc:
            raise ChartExit(f"tracking trajectory left the chart at lambda={lam}") from exc
        grid = np.linspace(0.0, span, 513)
        dev = 0.0
        for t in grid:
            d = tr_p.vector_at(t)[:dim] - tr_g.vector_at(t)[:dim]
            dev = max(dev, float(np.max(np.abs(d))))
        rows.append({"lam": lam, "span": span, "deviation": dev})
    return rows


def escape_time_bound(metric: MetricSpec, region, delta: float,
                      n_geodesics: int = 96, hard_cap: float = 20.0,
                      cfg: IntegratorConfig | None = None, dim: int = 2):
    """Empirical bound on the unit-speed geodesic exit time from a region.

    Samples interior points x directions at metric speed 1 and integrates
    each geodesic until region.gap(q) > delta.  Returns (tau, rows); raises
    NoEscape if any sample survives past the hard cap (hypothesis violated).
    The bound is a sampled estimate, not a proof.
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-9, abs_tol=1e-9)
    free = geodesic_system(metric, T=max(hard_cap, 1.0), dim=dim)
    n_pts = max(2, int(round(math.sqrt(n_geodesics / 8))))
    n_dir = max(4, n_geodesics // (n_pts * n_pts))
    guard = EventSpec(guard=lambda t, s: region.gap(s.q) - delta,
                      direction="rising", terminal=True)
    tau = 0.0
    rows = []
    for i1 in range(n_pts):
        for i2 in range(n_pts):
            q = region.interior(((i1 + 0.5) / n_pts, (i2 + 0.5) / n_pts))
            A = metric.matrix_at(q)
            L = np.linalg.cholesky(np.linalg.inv(A))
            for kd in range(n_dir):
                ang = 2 * math.pi * (kd + 0.5 * (i1 % 2)) / n_dir
                qd = L @ np.array([math.cos(ang), math.sin(ang)])  # unit metric speed
                s0 = State(q, qd)
                _, hits = integrate_until(free, 0.0, s0, [guard], hard_cap, cfg)
                if not hits:
                    raise NoEscape(
                        f"geodesic from q={q}, qd={qd} stayed within delta-neighborhood "
                        f"for {hard_cap} time units")
                t_exit = float(hits[0][1])
                tau = max(tau, t_exit)
                rows.append((*q.tolist(), *qd.tolist(), t_exit))
    return tau, rows
