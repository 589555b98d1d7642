"""Adaptive Runge-Kutta integration of second-order non-autonomous systems.

The propagator is an embedded Dormand-Prince 5(4) pair with PI step-size
control: the 5th-order solution is advanced, the 4th-order companion supplies
the local error estimate.  Dense output between accepted steps uses cubic
Hermite interpolation on the stored node derivatives, which is what the
boundary-margin and event machinery sample.  Everything here is a pure
function of its inputs; trajectories are immutable after construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteState, StepUnderflow

__all__ = [
    "State",
    "IntegratorConfig",
    "Trajectory",
    "EventSpec",
    "integrate",
    "integrate_until",
    "integrate_batch",
    "integrate_ode",
]


@dataclass(frozen=True)
class State:
    """Configuration and velocity in chart coordinates."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        qd = np.atleast_1d(np.asarray(self.qd, dtype=float))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)
        if q.shape != qd.shape or q.ndim != 1:
            raise ValueError(f"q and qd must be 1-d arrays of equal length, got {q.shape}, {qd.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("state components must be finite")

    @property
    def dim(self) -> int:
        return self.q.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qd])

    @staticmethod
    def from_vector(y: np.ndarray) -> "State":
        y = np.asarray(y, dtype=float)
        d = y.size // 2
        return State(y[:d], y[d:])


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and output control for the adaptive integrator.

    ``fixed_step`` switches off adaptivity entirely (reference mode used by
    the order-convergence checks); ``dense_dt`` controls the sampling grid of
    ``Trajectory.samples`` and defaults to ~1/512 of the span.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_step: float = np.inf
    dense_dt: float | None = None
    fixed_step: float | None = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


class Trajectory:
    """Densely sampled solution of a second-order system.

    Stores the accepted integration nodes together with the field values
    there; arbitrary times are reconstructed by cubic Hermite interpolation.
    """

    __slots__ = ("ts", "ys", "fs", "dim", "est_error", "_dense_dt")

    def __init__(self, ts, ys, fs, dim, est_error, dense_dt=None):
        self.ts = np.asarray(ts, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.fs = np.asarray(fs, dtype=float)
        self.dim = int(dim)
        self.est_error = float(est_error)
        self._dense_dt = dense_dt
        if self.ts.size < 2 or np.any(np.diff(self.ts) <= 0):
            raise ValueError("trajectory needs strictly increasing times")

    @property
    def t0(self) -> float:
        return float(self.ts[0])

    @property
    def t1(self) -> float:
        return float(self.ts[-1])

    def vector_at(self, t: float) -> np.ndarray:
        """Cubic-Hermite state vector at an arbitrary time inside the span."""
        ts = self.ts
        if t <= ts[0]:
            return self.ys[0].copy()
        if t >= ts[-1]:
            return self.ys[-1].copy()
        k = int(np.searchsorted(ts, t, side="right")) - 1
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.ys[k] + h10 * h * self.fs[k]
                + h01 * self.ys[k + 1] + h11 * h * self.fs[k + 1])

    def state_at(self, t: float) -> State:
        return State.from_vector(self.vector_at(t))

    def dense_times(self, dt: float | None = None) -> np.ndarray:
        dt = dt or self._dense_dt
        if dt is None:
            dt = (self.t1 - self.t0) / 512.0
        n = max(2, int(np.ceil((self.t1 - self.t0) / dt)) + 1)
        return np.linspace(self.t0, self.t1, n)

    @property
    def samples(self) -> list[tuple[float, State]]:
        """Ordered (t, State) samples on the dense output grid."""
        return [(float(t), self.state_at(t)) for t in self.dense_times()]

    def endpoint(self) -> State:
        return State.from_vector(self.ys[-1])


@dataclass(frozen=True)
class EventSpec:
    """Scalar guard crossing detector.

    ``direction`` is one of "rising", "falling", "any"; a terminal event
    truncates the trajectory at the localized hit.
    """

    guard: Callable[[float, State], float]
    direction: str = "any"
    terminal: bool = False

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError(f"bad event direction {self.direction!r}")


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_ALPHA = 0.7 / 5.0  # PI controller exponents (Gustafsson-style)
_BETA = 0.4 / 5.0
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _rhs(system, t, y):
    d = y.shape[-1] // 2
    q, qd = y[..., :d], y[..., d:]
    acc = system.accel(t, q, qd)
    return np.concatenate([qd, acc], axis=-1)


def _error_norm(err, y_old, y_new, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(system, t0, y0, f0, t1, cfg):
    if cfg.fixed_step is not None:
        return cfg.fixed_step
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    return float(min(h, t1 - t0, cfg.max_step))


def _step_pair(system, t, y, h):
    """One Dormand-Prince step; returns (y5, f_new, err_vec, k1)."""
    k = np.empty((7,) + y.shape)
    k[0] = _rhs(system, t, y)
    flat = k.reshape(7, -1)
    for i in range(1, 7):
        yi = y + h * (_A[i] @ flat[:i]).reshape(y.shape)
        k[i] = _rhs(system, t + _C[i] * h, yi)
    y5 = y + h * (_B5 @ flat).reshape(y.shape)
    err = h * (_E @ flat).reshape(y.shape)
    return y5, k[6], err, k[0]


def integrate(system, t0: float, s0: State, t1: float, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Propagate ``s0`` from ``t0`` to ``t1 > t0`` and return the trajectory.

    Raises StepUnderflow when adaptivity stalls and NonFiniteState on blow-up.
    The result is bit-stable for identical inputs (no randomness, no shared
    state).
    """
    cfg = cfg or IntegratorConfig()
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    if s0.dim != system.dim:
        raise ValueError(f"state dim {s0.dim} != system dim {system.dim}")

    y = s0.to_vector()
    t = float(t0)
    f = _rhs(system, t, y)
    if not np.all(np.isfinite(f)):
        raise NonFiniteState(f"field non-finite at t={t}")

    ts, ys, fs = [t], [y.copy()], [f.copy()]
    est_error = 0.0
    h = _initial_step(system, t, y, f, t1, cfg)
    err_prev = 1.0
    steps = 0

    while t < t1:
        steps += 1
        if steps > cfg.max_steps:
            raise StepUnderflow(f"exceeded {cfg.max_steps} steps")
        h = min(h, cfg.max_step, t1 - t)
        if cfg.fixed_step is not None:
            h = min(cfg.fixed_step, t1 - t)
        if h < 1e-14 * max(abs(t), 1.0):
            raise StepUnderflow(f"step size {h:.3e} underflowed at t={t}")

        y_new, f_new, err_vec, _ = _step_pair(system, t, y, h)
        if not np.all(np.isfinite(y_new)):
            if cfg.fixed_step is not None:
                raise NonFiniteState(f"state non-finite at t={t + h}")
            h *= 0.25
            continue

        if cfg.fixed_step is None:
            err = _error_norm(err_vec, y, y_new, cfg)
            if not np.isfinite(err):
                h *= 0.25
                continue
            if err > 1.0:
                h *= max(_MIN_FACTOR, _SAFETY * err ** (-_ALPHA))
                continue
        else:
            err = _error_norm(err_vec, y, y_new, cfg)

        t = t + h
        y = y_new
        f = f_new
        ts.append(t)
        ys.append(y.copy())
        fs.append(f.copy())
        est_error += float(np.max(np.abs(err_vec)))
        if cfg.fixed_step is None:
            factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA if err > 0 else _MAX_FACTOR
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = max(err, 1e-10)

    return Trajectory(ts, ys, fs, system.dim, est_error, cfg.dense_dt)


def _hermite(y0, f0, y1, f1, h, s):
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _locate_in_step(guard, ta, ya, fa, tb, yb, fb, s_lo, s_hi, g_lo):
    """Bisection on the step's Hermite interpolant; 60 iterations max."""
    h = tb - ta
    for _ in range(60):
        mid = 0.5 * (s_lo + s_hi)
        ym = _hermite(ya, fa, yb, fb, h, mid)
        gm = guard(ta + mid * h, State.from_vector(ym))
        if gm == 0.0:
            s_lo = s_hi = mid
            break
        if (g_lo < 0) == (gm < 0):
            s_lo, g_lo = mid, gm
        else:
            s_hi = mid
    s = 0.5 * (s_lo + s_hi)
    y_hit = _hermite(ya, fa, yb, fb, h, s)
    return ta + s * h, y_hit


def _scan_step(events, g_prev, ta, ya, fa, tb, yb, fb, n_sub=8):
    """Crossing scan of one accepted step; returns sorted (t_hit, idx, y_hit)."""
    h = tb - ta
    step_hits = []
    for idx, ev in enumerate(events):
        s_prev, g0 = 0.0, g_prev[idx]
        for j in range(1, n_sub + 1):
            s = j / n_sub
            y_s = yb if j == n_sub else _hermite(ya, fa, yb, fb, h, s)
            g1 = ev.guard(ta + s * h, State.from_vector(y_s))
            crossed = (
                (ev.direction == "rising" and g0 < 0 <= g1)
                or (ev.direction == "falling" and g0 > 0 >= g1)
                or (ev.direction == "any" and (g0 < 0 <= g1 or g0 > 0 >= g1))
            )
            if crossed:
                t_hit, y_hit = _locate_in_step(ev.guard, ta, ya, fa, tb, yb, fb,
                                               s_prev, s, g0)
                step_hits.append((t_hit, idx, y_hit))
                break
            s_prev, g0 = s, g1
        g_prev[idx] = ev.guard(tb, State.from_vector(yb))
    step_hits.sort(key=lambda rec: rec[0])
    return step_hits


def integrate_until(system, t0: float, s0: State, events: Sequence[EventSpec],
                    t_max: float, cfg: IntegratorConfig | None = None):
    """Integrate until the first terminal event or ``t_max``.

    Returns ``(trajectory, hits)`` where hits are ``(event_index, t_hit,
    State)`` triples with the guard localized to |guard| < 1e-10 by bisection
    over the bracketing step.  Events are scanned online so integration stops
    at the first terminal hit; an empty hit list is not an error.
    """
    cfg = cfg or IntegratorConfig()
    if not t_max > t0:
        raise ValueError("t_max must exceed t0")

    y = s0.to_vector()
    t = float(t0)
    f = _rhs(system, t, y)
    if not np.all(np.isfinite(f)):
        raise NonFiniteState(f"field non-finite at t={t}")

    ts, ys, fs = [t], [y.copy()], [f.copy()]
    hits: list = []
    cut = None
    est_error = 0.0
    g_prev = [ev.guard(t, s0) for ev in events]
    h = _initial_step(system, t, y, f, t_max, cfg)
    err_prev = 1.0
    steps = 0

    while t < t_max and cut is None:
        steps += 1
        if steps > cfg.max_steps:
            raise StepUnderflow(f"exceeded {cfg.max_steps} steps")
        h = min(h, cfg.max_step, t_max - t)
        if cfg.fixed_step is not None:
            h = min(cfg.fixed_step, t_max - t)
        if h < 1e-14 * max(abs(t), 1.0):
            raise StepUnderflow(f"step size {h:.3e} underflowed at t={t}")

        y_new, f_new, err_vec, _ = _step_pair(system, t, y, h)
        if not np.all(np.isfinite(y_new)):
            if cfg.fixed_step is not None:
                raise NonFiniteState(f"state non-finite at t={t + h}")
            h *= 0.25
            continue
        err = _error_norm(err_vec, y, y_new, cfg)
        if cfg.fixed_step is None:
            if not np.isfinite(err):
                h *= 0.25
                continue
            if err > 1.0:
                h *= max(_MIN_FACTOR, _SAFETY * err ** (-_ALPHA))
                continue

        t_new = t + h
        step_hits = _scan_step(events, g_prev, t, y, f, t_new, y_new, f_new)
        for t_hit, idx, y_hit in step_hits:
            hits.append((idx, float(t_hit), State.from_vector(y_hit)))
            if events[idx].terminal:
                cut = (t_hit, y_hit)
                break

        t, y, f = t_new, y_new, f_new
        ts.append(t)
        ys.append(y.copy())
        fs.append(f.copy())
        est_error += float(np.max(np.abs(err_vec)))
        if cfg.fixed_step is None:
            factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA if err > 0 else _MAX_FACTOR
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = max(err, 1e-10)

    if cut is None:
        return Trajectory(ts, ys, fs, system.dim, est_error, cfg.dense_dt), hits

    t_hit, y_hit = cut
    # drop the node past the terminal hit, end exactly at the event
    ts, ys, fs = ts[:-1], ys[:-1], fs[:-1]
    if t_hit > ts[-1] + 1e-15 * max(1.0, abs(t_hit)):
        ts.append(t_hit)
        ys.append(y_hit)
        fs.append(_rhs(system, t_hit, y_hit))
    return Trajectory(ts, ys, fs, system.dim, est_error, cfg.dense_dt), hits


def integrate_ode(f: Callable, t0: float, y0: np.ndarray, t1: float,
                  cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Generic first-order adaptive solve of y' = f(t, y); returns y(t1).

    Same Dormand-Prince pair and PI controller as ``integrate``; used for
    auxiliary systems that are not in second-order form (e.g. linearized
    flows).
    """
    cfg = cfg or IntegratorConfig()
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    y = np.array(y0, dtype=float)
    t = float(t0)
    f0 = f(t, y)
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = float(min(h, t1 - t0, cfg.max_step))
    err_prev = 1.0
    steps = 0
    k = np.empty((7,) + y.shape)

    while t < t1:
        steps += 1
        if steps > cfg.max_steps:
            raise StepUnderflow(f"exceeded {cfg.max_steps} steps")
        h = min(h, cfg.max_step, t1 - t)
        if h < 1e-14 * max(abs(t), 1.0):
            raise StepUnderflow(f"step size {h:.3e} underflowed at t={t}")
        k[0] = f(t, y)
        flat = k.reshape(7, -1)
        for i in range(1, 7):
            yi = y + h * (_A[i] @ flat[:i]).reshape(y.shape)
            k[i] = f(t + _C[i] * h, yi)
        y_new = y + h * (_B5 @ flat).reshape(y.shape)
        err_vec = h * (_E @ flat).reshape(y.shape)
        if not np.all(np.isfinite(y_new)):
            h *= 0.25
            continue
        err = _error_norm(err_vec, y, y_new, cfg)
        if not np.isfinite(err):
            h *= 0.25
            continue
        if err > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-_ALPHA))
            continue
        t += h
        y = y_new
        factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA if err > 0 else _MAX_FACTOR
        h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        err_prev = max(err, 1e-10)
    return y


def integrate_batch(system, t0: float, Y0: np.ndarray, t1: float,
                    cfg: IntegratorConfig | None = None):
    """Propagate many state vectors at once through one adaptive sweep.

    ``Y0`` has shape (m, 2*dim); the shared step is controlled by the worst
    row.  Rows that go non-finite are frozen and flagged.  Returns
    ``(Y_final, ok_mask)``.  Requires a system whose accel broadcasts over a
    leading batch axis (all gallery systems do).
    """
    cfg = cfg or IntegratorConfig()
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    Y = np.array(Y0, dtype=float)
    m = Y.shape[0]
    ok = np.ones(m, dtype=bool)
    t = float(t0)

    F = _rhs(system, t, Y)
    bad = ~np.all(np.isfinite(F), axis=1)
    ok &= ~bad
    if not ok.any():
        return Y, ok
    F = np.where(np.isfinite(F), F, 0.0)

    scale = cfg.abs_tol + cfg.rel_tol * np.abs(Y[ok])
    d0 = np.sqrt(np.mean((Y[ok] / scale) ** 2))
    d1 = np.sqrt(np.mean((F[ok] / scale) ** 2))
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = float(min(h, t1 - t0, cfg.max_step))
    err_prev = 1.0
    steps = 0
    rejects = 0

    while t < t1:
        steps += 1
        if steps > cfg.max_steps:
            ok[:] = False
            return Y, ok
        h = min(h, cfg.max_step, t1 - t)
        stalled = h < 1e-13 * max(abs(t), 1.0) or rejects > 40

        Y_new, F_new, err_vec, _ = _step_pair(system, t, Y, h)
        finite = np.all(np.isfinite(Y_new), axis=1) & np.all(np.isfinite(F_new), axis=1)
        newly_bad = ok & ~finite
        if newly_bad.any():
            ok &= finite
            Y_new[~finite] = Y[~finite]
            F_new[~finite] = 0.0
            err_vec[~finite] = 0.0
            if not ok.any():
                return Y_new, ok

        act = ok
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(Y[act]), np.abs(Y_new[act]))
        row_err = np.sqrt(np.mean((err_vec[act] / scale) ** 2, axis=1))
        err = float(np.max(row_err)) if row_err.size else 0.0
        if not np.isfinite(err) or err > 1.0:
            if stalled:
                # shed the rows stalling the shared step and move on
                drop = np.zeros(m, dtype=bool)
                drop[np.where(act)[0][~(row_err <= 1.0)]] = True
                ok &= ~drop
                rejects = 0
                if not ok.any():
                    return Y, ok
                continue
            rejects += 1
            h *= 0.25 if not np.isfinite(err) else max(_MIN_FACTOR, _SAFETY * err ** (-_ALPHA))
            continue

        rejects = 0
        keep = ~ok
        Y_new[keep] = Y[keep]
        t += h
        Y, F = Y_new, F_new
        factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA if err > 0 else _MAX_FACTOR
        h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        err_prev = max(err, 1e-10)

    return Y, ok
