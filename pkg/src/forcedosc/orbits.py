"""Period-map shooting, winding-number index, confinement and stability.

The period map P is the time-T flow; its fixed points are initial states of
T-periodic solutions.  Newton shooting runs damped iterations on
R(s) = P(s) - s with forward-difference Jacobians; the planar winding number
of R over a contour cross-checks the segment index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ChartSingularity,
    NoConvergence,
    NonFiniteState,
    RefinementLimit,
    SingularJacobian,
    StepUnderflow,
    ZeroOnContour,
)
from .integrate import (
    IntegratorConfig,
    State,
    Trajectory,
    integrate,
    integrate_batch,
    integrate_ode,
)
from .systems import SystemSpec

__all__ = [
    "ShootConfig",
    "PeriodicOrbit",
    "ConfinementReport",
    "period_map",
    "newton_shoot",
    "multistart_search",
    "winding_index",
    "verify_confinement",
    "floquet_multipliers",
]

_SOLVER_ERRORS = (NoConvergence, SingularJacobian, ChartSingularity,
                  StepUnderflow, NonFiniteState)


@dataclass(frozen=True)
class ShootConfig:
    """Newton-shooting knobs; defaults pinned for the acceptance suite."""

    tol_residual: float = 1e-9
    max_iters: int = 50
    fd_step: float = 1e-7
    backtrack: float = 0.5
    min_damping: float = 1e-4
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        for name in ("tol_residual", "max_iters", "fd_step", "backtrack", "min_damping"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class PeriodicOrbit:
    """A located T-periodic solution with certification metadata."""

    s0: State
    residual_norm: float
    trajectory: Trajectory
    floquet: np.ndarray | None = None
    barrier_margin: float | None = None

    def sort_key(self):
        return tuple(self.s0.q.tolist() + self.s0.qd.tolist())


def period_map(system: SystemSpec, s0: State,
               cfg: IntegratorConfig | None = None) -> State:
    """State at time T of the solution launched from (0, s0)."""
    traj = integrate(system, 0.0, s0, system.period, cfg or IntegratorConfig())
    return traj.endpoint()


def _period_vec(system, y, cfg):
    traj = integrate(system, 0.0, State.from_vector(y), system.period, cfg)
    return traj.ys[-1]


def _residual_vec(system, y, cfg):
    yT = _period_vec(system, y, cfg)
    d = system.dim
    dq = system.wrap_delta(yT[:d] - y[:d])
    return np.concatenate([dq, yT[d:] - y[d:]])


def newton_shoot(system: SystemSpec, guess: State,
                 cfg: ShootConfig | None = None,
                 compute_floquet: bool = True) -> PeriodicOrbit:
    """Damped Newton iteration on R(s) = P(s) - s from the given guess.

    Deterministic for identical inputs.  Raises NoConvergence after
    max_iters (or when backtracking stalls below the minimum damping) and
    SingularJacobian when det(I - DP) degenerates.
    """
    cfg = cfg or ShootConfig()
    y = guess.to_vector()
    m = y.size
    R = _residual_vec(system, y, cfg.integrator)
    r_norm = float(np.linalg.norm(R))

    for _ in range(cfg.max_iters):
        if r_norm <= cfg.tol_residual:
            return _package_orbit(system, y, r_norm, cfg, compute_floquet)
        if r_norm > 1e8:
            raise NoConvergence("iterate ran away", last_state=State.from_vector(y),
                                residual=r_norm)
        J = np.empty((m, m))
        h = cfg.fd_step
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            J[:, i] = (_residual_vec(system, y + e, cfg.integrator) - R) / h
        det = float(np.linalg.det(J))
        if abs(det) < 1e-12:
            raise SingularJacobian(
                f"det(I - DP) = {det:.3e} below 1e-12", iterate=State.from_vector(y))
        delta = np.linalg.solve(J, -R)
        alpha = 1.0
        while True:
            y_try = y + alpha * delta
            try:
                R_try = _residual_vec(system, y_try, cfg.integrator)
                r_try = float(np.linalg.norm(R_try))
            except (StepUnderflow, NonFiniteState, ChartSingularity):
                r_try = math.inf
            if r_try < r_norm:
                y, R, r_norm = y_try, R_try, r_try
                break
            alpha *= cfg.backtrack
            if alpha < cfg.min_damping:
                raise NoConvergence("backtracking stalled below minimum damping",
                                    last_state=State.from_vector(y), residual=r_norm)
    if r_norm <= cfg.tol_residual:
        return _package_orbit(system, y, r_norm, cfg, compute_floquet)
    raise NoConvergence(f"residual {r_norm:.3e} after {cfg.max_iters} iterations",
                        last_state=State.from_vector(y), residual=r_norm)


def _package_orbit(system, y, r_norm, cfg, compute_floquet):
    dense = IntegratorConfig(rel_tol=cfg.integrator.rel_tol,
                             abs_tol=cfg.integrator.abs_tol,
                             max_step=cfg.integrator.max_step,
                             dense_dt=system.period / 1024.0)
    traj = integrate(system, 0.0, State.from_vector(y), system.period, dense)
    orbit = PeriodicOrbit(s0=State.from_vector(y), residual_norm=r_norm, trajectory=traj)
    if compute_floquet:
        try:
            orbit.floquet = floquet_multipliers(system, orbit.s0, cfg=cfg.integrator)[0]
        except _SOLVER_ERRORS:
            orbit.floquet = None
    return orbit


def _batch_presolve(system, nodes, cfg):
    """Batched damped Newton over all grid nodes; returns candidate vectors.

    Runs at relaxed tolerances: every candidate is re-polished by the
    single-node ``newton_shoot`` afterwards, so the sweep only has to land
    inside the polish basin.
    """
    Y = np.stack([s.to_vector() for s in nodes])
    m, n = Y.shape
    active = np.ones(m, dtype=bool)
    cand: list[np.ndarray] = []
    T = system.period
    d = system.dim
    icfg = IntegratorConfig(rel_tol=max(cfg.integrator.rel_tol, 1e-8),
                            abs_tol=max(cfg.integrator.abs_tol, 1e-8),
                            max_step=cfg.integrator.max_step)
    tol = max(cfg.tol_residual, 1e-7)

    def residual_batch(Yb):
        PT, ok = integrate_batch(system, 0.0, Yb, T, icfg)
        Rb = PT - Yb
        Rb[:, :d] = system.wrap_delta(Rb[:, :d])
        return Rb, ok

    R, ok = residual_batch(Y)
    active &= ok
    norms = np.linalg.norm(R, axis=1)
    norms[~active] = math.inf

    for _ in range(min(cfg.max_iters, 16)):
        conv = active & (norms <= tol)
        for idx in np.where(conv)[0]:
            cand.append(Y[idx].copy())
        active &= ~conv
        # drop runaways: far outside any plausible basin
        active &= norms < 1e6
        if not active.any():
            break
        idx = np.where(active)[0]
        Ya = Y[idx]
        Ra = R[idx]
        J = np.empty((idx.size, n, n))
        for i in range(n):
            E = np.zeros((idx.size, n))
            E[:, i] = cfg.fd_step
            Ri, ok_i = residual_batch(Ya + E)
            J[:, :, i] = (Ri - Ra) / cfg.fd_step
            J[~ok_i, :, i] = np.nan
        dets = np.linalg.det(np.nan_to_num(J, nan=0.0))
        solvable = np.isfinite(J).all(axis=(1, 2)) & (np.abs(dets) > 1e-12)
        delta = np.zeros_like(Ya)
        if solvable.any():
            delta[solvable] = np.linalg.solve(J[solvable], -Ra[solvable][..., None])[..., 0]
        pending = solvable.copy()
        alpha = 1.0
        accepted = np.zeros(idx.size, dtype=bool)
        while pending.any() and alpha >= cfg.min_damping:
            trial = Ya[pending] + alpha * delta[pending]
            R_try, ok_t = residual_batch(trial)
            n_try = np.linalg.norm(R_try, axis=1)
            n_try[~ok_t] = math.inf
            better = n_try < norms[idx[pending]]
            rows = np.where(pending)[0][better]
            Ya[rows] = trial[better]
            Ra[rows] = R_try[better]
            norms[idx[rows]] = n_try[better]
            accepted[rows] = True
            pending[rows] = False
            alpha *= cfg.backtrack
        stalled = ~accepted
        active[idx[stalled]] = False
        Y[idx] = Ya
        R[idx] = Ra
    conv = active & (norms <= tol)
    for k in np.where(conv)[0]:
        cand.append(Y[k].copy())
    return cand


def multistart_search(system: SystemSpec, segment, grid,
                      cfg: ShootConfig | None = None, jobs: int = 1,
                      dedup_tol: float = 1e-6,
                      batch: bool | None = None) -> list[PeriodicOrbit]:
    """Newton shooting from every interior grid node, deduplicated.

    Flat systems are pre-solved in one batched sweep and every candidate is
    re-polished with the single-node ``newton_shoot`` so reported orbits
    carry single-path semantics; chart systems default to the per-node path
    (a singular row would stall the shared-step sweep).  Returned orbits
    are re-verified for confinement in the segment and sorted
    lexicographically by initial state.  An empty list is a legal outcome.
    """
    cfg = cfg or ShootConfig()
    nodes = segment.interior_points(grid)
    candidates: list[State] = []
    if batch is None:
        batch = system.batchable and system.metric is None
    if batch:
        for y in _batch_presolve(system, nodes, cfg):
            candidates.append(State.from_vector(y))
    else:
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            def solve(node):
                try:
                    return newton_shoot(system, node, cfg, compute_floquet=False).s0
                except _SOLVER_ERRORS:
                    return None

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for res in pool.map(solve, nodes):
                    if res is not None:
                        candidates.append(res)
        else:
            for node in nodes:
                try:
                    candidates.append(newton_shoot(system, node, cfg,
                                                   compute_floquet=False).s0)
                except _SOLVER_ERRORS:
                    continue

    # keep only candidates still inside the section, then dedup before polish
    inside = [s for s in candidates if segment.contains(0.0, s, tol=1e-9)]
    unique: list[State] = []
    for s in sorted(inside, key=lambda s: tuple(s.q.tolist() + s.qd.tolist())):
        if all(_state_dist(system, s, u) >= dedup_tol for u in unique):
            unique.append(s)

    orbits = []
    for s in unique:
        try:
            orb = newton_shoot(system, s, cfg)
        except _SOLVER_ERRORS:
            continue
        rep = verify_confinement(orb, segment, n_checks=512)
        if rep.ok:
            orb.barrier_margin = rep.min_margin
            orbits.append(orb)
    final = []
    for orb in sorted(orbits, key=PeriodicOrbit.sort_key):
        if all(_state_dist(system, orb.s0, kept.s0) >= dedup_tol for kept in final):
            final.append(orb)
    return final


def _state_dist(system, a: State, b: State) -> float:
    dq = system.wrap_delta(a.q - b.q)
    return float(max(np.max(np.abs(dq)), np.max(np.abs(a.qd - b.qd))))


def winding_index(system: SystemSpec, contour: np.ndarray, n_points: int = 64,
                  cfg: IntegratorConfig | None = None,
                  max_points: int = 16384) -> int:
    """Winding number of R = P - id around a closed polygonal contour.

    One degree of freedom only (planar phase space).  Angle increments are
    accumulated at contour samples and the sampling is refined until every
    increment is below pi/2, so the count equals the sum of enclosed
    fixed-point indices.
    """
    if system.dim != 1:
        raise ValueError("winding_index needs a 1-DOF system")
    cfg = cfg or IntegratorConfig()
    verts = np.asarray(contour, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise ValueError("contour must be (m, 2) with m >= 3 vertices")

    seg = np.diff(np.vstack([verts, verts[:1]]), axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    total_len = cum[-1]

    def point(tau):
        s = (tau % 1.0) * total_len
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(verts) - 1)
        frac = (s - cum[k]) / lengths[k]
        return verts[k] + frac * seg[k]

    def eval_R(taus):
        Y = np.stack([point(tau) for tau in taus])
        if system.batchable:
            PT, ok = integrate_batch(system, 0.0, Y, system.period, cfg)
            if not ok.all():
                raise NonFiniteState("contour sample integration failed")
            R = PT - Y
        else:
            R = np.stack([
                _period_vec(system, row, cfg) - row for row in Y])
        mags = np.linalg.norm(R, axis=1)
        if np.any(mags < 1e-10):
            k = int(np.argmin(mags))
            raise ZeroOnContour(
                f"|P(s)-s| = {mags[k]:.2e} at contour point {Y[k]}")
        return np.arctan2(R[:, 1], R[:, 0])

    taus = list(np.arange(n_points) / n_points)
    angles = list(eval_R(taus))

    while True:
        m = len(taus)
        offenders = []
        for i in range(m):
            a0, a1 = angles[i], angles[(i + 1) % m]
            inc = (a1 - a0 + math.pi) % (2 * math.pi) - math.pi
            if abs(inc) >= math.pi / 2:
                offenders.append(i)
        if not offenders:
            break
        if m + len(offenders) > max_points:
            raise RefinementLimit(f"needed more than {max_points} contour samples")
        mids = []
        for i in offenders:
            right = taus[i + 1] if i + 1 < m else taus[0] + 1.0
            mids.append(0.5 * (taus[i] + right))
        new_angles = eval_R(mids)
        for i, tau_mid, ang in sorted(zip(offenders, mids, new_angles),
                                      key=lambda rec: -rec[0]):
            taus.insert(i + 1, tau_mid % 1.0)
            angles.insert(i + 1, ang)

    total = 0.0
    m = len(taus)
    for i in range(m):
        a0, a1 = angles[i], angles[(i + 1) % m]
        total += (a1 - a0 + math.pi) % (2 * math.pi) - math.pi
    w = total / (2 * math.pi)
    w_int = int(round(w))
    if abs(w - w_int) > 0.05:
        raise RefinementLimit(f"winding total {w:.4f} not close to an integer")
    return w_int


@dataclass
class ConfinementReport:
    """Margins of an orbit against its segment (positive = strictly inside)."""

    min_margin: float
    margins: np.ndarray
    band_margin: float | None = None

    @property
    def ok(self) -> bool:
        band_ok = self.band_margin is None or self.band_margin > 0
        return self.min_margin > 0 and band_ok

    def as_dict(self):
        return {"min_margin": self.min_margin,
                "margins": np.asarray(self.margins).tolist(),
                "band_margin": self.band_margin, "ok": self.ok}


def verify_confinement(orbit: PeriodicOrbit, segment, n_checks: int = 512,
                       band_limit: float | None = None) -> ConfinementReport:
    """Min distance of the dense orbit to every one-sided segment bound.

    With ``band_limit`` (= cutoff speed minus band half-width) the report
    additionally certifies the orbit never enters the cutoff-active band,
    i.e. it solves the original, unmodified equation.
    """
    traj = orbit.trajectory
    ts = np.linspace(traj.t0, traj.t1, n_checks)
    mins = None
    band = math.inf if band_limit is not None else None
    for t in ts:
        st = traj.state_at(float(t))
        m = segment.margins(float(t), st)
        mins = m if mins is None else np.minimum(mins, m)
        if band_limit is not None:
            if segment.kind == "box":
                band = min(band, band_limit - float(np.max(np.abs(st.qd))))
            else:
                band = min(band, band_limit - segment.region.metric.energy(st.q, st.qd))
    return ConfinementReport(min_margin=float(np.min(mins)), margins=mins,
                             band_margin=band)


def floquet_multipliers(system: SystemSpec, s0: State, fd_step: float = 1e-6,
                        method: str = "variational",
                        cfg: IntegratorConfig | None = None):
    """Eigenvalues of the linearized period map at an orbit's initial state.

    "variational" integrates the linearized flow alongside the orbit (field
    Jacobian from central differences of the acceleration); "fd" builds the
    monodromy from central differences of the period map itself.  Returns
    (multipliers, max eigen-residual ||M v - lam v||).
    """
    cfg = cfg or IntegratorConfig()
    d = system.dim
    n = 2 * d

    if method == "fd":
        M = np.empty((n, n))
        y0 = s0.to_vector()
        for i in range(n):
            e = np.zeros(n)
            e[i] = fd_step
            fwd = _period_vec(system, y0 + e, cfg)
            bwd = _period_vec(system, y0 - e, cfg)
            M[:, i] = (fwd - bwd) / (2 * fd_step)
    elif method == "variational":
        def field_jac(t, q, qd):
            J = np.zeros((d, 2 * d))
            for i in range(d):
                eq = np.zeros(d)
                eq[i] = fd_step
                J[:, i] = (np.asarray(system.accel(t, q + eq, qd))
                           - np.asarray(system.accel(t, q - eq, qd))) / (2 * fd_step)
                J[:, d + i] = (np.asarray(system.accel(t, q, qd + eq))
                               - np.asarray(system.accel(t, q, qd - eq))) / (2 * fd_step)
            return J

        def rhs(t, z):
            y = z[:n]
            M = z[n:].reshape(n, n)
            q, qd = y[:d], y[d:]
            acc = np.asarray(system.accel(t, q, qd))
            A = np.zeros((n, n))
            A[:d, d:] = np.eye(d)
            A[d:, :] = field_jac(t, q, qd)
            return np.concatenate([qd, acc, (A @ M).ravel()])

        z0 = np.concatenate([s0.to_vector(), np.eye(n).ravel()])
        zT = integrate_ode(rhs, 0.0, z0, system.period, cfg)
        M = zT[n:].reshape(n, n)
    else:
        raise ValueError(f"unknown method {method!r}")

    vals, vecs = np.linalg.eig(M)
    resid = 0.0
    for k in range(n):
        v = vecs[:, k]
        resid = max(resid, float(np.linalg.norm(M @ v - vals[k] * v)))
    order = np.argsort(-np.abs(vals))
    return vals[order], resid
