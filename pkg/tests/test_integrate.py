import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from forcedosc.errors import NonFiniteState
from forcedosc.integrate import (
    EventSpec,
    IntegratorConfig,
    State,
    integrate,
    integrate_batch,
    integrate_until,
)
from forcedosc.systems import flat_system, pendulum_system

TWO_PI = 2 * math.pi


def sho():
    return flat_system(lambda t, q, qd: -q, T=TWO_PI, dim=1, name="sho")


def free_particle():
    return flat_system(lambda t, q, qd: np.zeros_like(q), T=1.0, dim=1, name="free")


def test_harmonic_oscillator_round_trip():
    tr = integrate(sho(), 0.0, State([1.0], [0.0]), TWO_PI)
    end = tr.endpoint()
    assert abs(end.q[0] - 1.0) < 1e-8
    assert abs(end.qd[0]) < 1e-8


def test_free_particle_linear_flow():
    T = 3.75
    tr = integrate(free_particle(), 0.0, State([0.0], [1.0]), T)
    end = tr.endpoint()
    assert abs(end.q[0] - T) < 1e-10
    assert abs(end.qd[0] - 1.0) < 1e-12


def test_pendulum_equilibrium_is_preserved():
    sys_p = pendulum_system(lambda t, q, qd: 0.0, T=TWO_PI, f_bound=0.0)
    tr = integrate(sys_p, 0.0, State([math.pi / 2], [0.0]), 13.7)
    end = tr.endpoint()
    assert abs(end.q[0] - math.pi / 2) < 1e-10
    assert abs(end.qd[0]) < 1e-10


def test_fixed_step_order_convergence():
    # halving the step must cut the endpoint error by at least 8x
    errs = []
    for h in (0.02, 0.01):
        cfg = IntegratorConfig(fixed_step=h)
        end = integrate(sho(), 0.0, State([1.0], [0.0]), TWO_PI, cfg).endpoint()
        errs.append(abs(end.q[0] - 1.0) + abs(end.qd[0]))
    assert errs[0] / errs[1] >= 8.0


def test_time_reversal():
    f = lambda t: 0.4 * math.sin(t)
    sys_f = pendulum_system(lambda t, q, qd: f(t), T=TWO_PI, f_bound=0.4)
    t0, t1 = 0.0, 5.0
    s0 = State([1.2], [0.3])
    fwd = integrate(sys_f, t0, s0, t1).endpoint()

    rev = flat_system(lambda t, q, qd: f(t1 + t0 - t) * np.sin(q) - np.cos(q),
                      T=TWO_PI, dim=1)
    back = integrate(rev, t0, State(fwd.q, -fwd.qd), t1).endpoint()
    tol = 10 * 1e-10
    assert abs(back.q[0] - s0.q[0]) < tol * 100  # global error scale
    assert abs(-back.qd[0] - s0.qd[0]) < tol * 100


def test_bit_stable_reproducibility():
    sys_f = pendulum_system(lambda t, q, qd: 0.5 * np.sin(t), T=TWO_PI, f_bound=0.5)
    a = integrate(sys_f, 0.0, State([1.0], [0.5]), TWO_PI).endpoint()
    b = integrate(sys_f, 0.0, State([1.0], [0.5]), TWO_PI).endpoint()
    assert a.q[0] == b.q[0] and a.qd[0] == b.qd[0]


def test_blowup_raises_nonfinite():
    bad = flat_system(lambda t, q, qd: (1.0 + q ** 2) ** 2, T=1.0, dim=1)
    with pytest.raises((NonFiniteState, Exception)):
        integrate(bad, 0.0, State([1.0], [5.0]), 50.0)


def test_event_free_particle_hit_time():
    ev = EventSpec(guard=lambda t, s: s.q[0] - 1.0, direction="rising", terminal=True)
    traj, hits = integrate_until(free_particle(), 0.0, State([0.0], [1.0]), [ev], 3.0)
    assert len(hits) == 1
    idx, t_hit, s_hit = hits[0]
    assert idx == 0
    assert abs(t_hit - 1.0) < 1e-8
    assert abs(s_hit.q[0] - 1.0) < 1e-10  # guard localization
    assert abs(traj.t1 - t_hit) < 1e-12


def test_event_pendulum_falling_guard():
    # oracle: dense independent integration at 1e-12 tolerance
    def rhs(t, y):
        return [y[1], -math.cos(y[0])]

    def guard(t, y):
        return y[0]

    guard.terminal = True
    guard.direction = -1
    sol = solve_ivp(rhs, (0.0, 1.0), [0.1, -1.0], rtol=1e-12, atol=1e-12,
                    events=guard, dense_output=True)
    assert sol.t_events[0].size == 1
    t_ref = sol.t_events[0][0]

    sys_p = pendulum_system(lambda t, q, qd: 0.0, T=TWO_PI, f_bound=0.0)
    ev = EventSpec(guard=lambda t, s: s.q[0], direction="falling", terminal=True)
    _, hits = integrate_until(sys_p, 0.0, State([0.1], [-1.0]), [ev], 1.0)
    assert len(hits) == 1
    assert hits[0][1] < 1.0
    assert abs(hits[0][1] - t_ref) < 1e-8


def test_event_no_crossing_returns_empty():
    sys_p = pendulum_system(lambda t, q, qd: 0.0, T=TWO_PI, f_bound=0.0)
    ev = EventSpec(guard=lambda t, s: s.q[0] - 10.0, direction="any", terminal=True)
    traj, hits = integrate_until(sys_p, 0.0, State([0.3], [0.0]), [ev], 2.0)
    assert hits == []
    assert abs(traj.t1 - 2.0) < 1e-12


def test_event_guard_value_small_at_hits():
    sys_s = sho()
    ev = EventSpec(guard=lambda t, s: s.q[0], direction="any", terminal=False)
    _, hits = integrate_until(sys_s, 0.0, State([1.0], [0.0]), [ev], TWO_PI)
    assert len(hits) == 2  # q crosses zero twice per period
    for _, t_hit, s_hit in hits:
        assert abs(s_hit.q[0]) < 1e-10


def test_dense_output_matches_reference():
    cfg = IntegratorConfig(dense_dt=0.01)
    tr = integrate(sho(), 0.0, State([1.0], [0.0]), TWO_PI, cfg)
    for t in (0.5, 1.7, 3.3, 5.9):
        st = tr.state_at(t)
        assert abs(st.q[0] - math.cos(t)) < 1e-8
        assert abs(st.qd[0] + math.sin(t)) < 1e-8
    samples = tr.samples
    assert samples[0][0] == 0.0
    assert abs(samples[-1][0] - TWO_PI) < 1e-12
    ts = [t for t, _ in samples]
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_batch_matches_single():
    sys_s = sho()
    Y0 = np.array([[1.0, 0.0], [0.3, -0.4], [2.0, 1.0]])
    YT, ok = integrate_batch(sys_s, 0.0, Y0, TWO_PI)
    assert ok.all()
    for row0, rowT in zip(Y0, YT):
        end = integrate(sys_s, 0.0, State([row0[0]], [row0[1]]), TWO_PI).endpoint()
        assert abs(end.q[0] - rowT[0]) < 1e-7
        assert abs(end.qd[0] - rowT[1]) < 1e-7


def test_rejects_reversed_span():
    with pytest.raises(ValueError):
        integrate(sho(), 1.0, State([1.0], [0.0]), 0.5)
