import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from forcedosc.errors import SingularMetric, UnboundedForce
from forcedosc.integrate import State, integrate
from forcedosc.systems import (
    ChainSpec,
    GrowthBound,
    GrowthGrid,
    MetricSpec,
    RotationLaw,
    chain_field_sign_report,
    check_time_periodicity,
    circle_curve,
    curve_from_parametric,
    curve_pendulum_system,
    flat_metric,
    flat_system,
    geodesic_system,
    growth_check,
    morse_chain_system,
    morse_force,
    morse_potential,
    pendulum_system,
    rotating_curve_system,
    sphere_polar_metric,
    sphere_stereographic_metric,
    spherical_pendulum_system,
    vertical_tangent_params,
)

TWO_PI = 2 * math.pi


# --- pendulum ---------------------------------------------------------------

def test_pendulum_accel_values():
    sys_0 = pendulum_system(lambda t, q, qd: 0.0, TWO_PI, f_bound=0.0)
    assert abs(sys_0.accel(0.3, np.array([math.pi / 2]), np.array([0.0]))[0]) < 1e-15
    assert abs(sys_0.accel(0.0, np.array([0.0]), np.array([0.0]))[0] + 1.0) < 1e-15
    sys_1 = pendulum_system(lambda t, q, qd: 1.0, TWO_PI, f_bound=1.0)
    assert abs(sys_1.accel(0.0, np.array([math.pi / 2]), np.array([0.0]))[0] - 1.0) < 1e-15


def test_pendulum_requires_bound():
    with pytest.raises(UnboundedForce):
        pendulum_system(lambda t, q, qd: 0.0, TWO_PI, f_bound=None)


# --- curves -----------------------------------------------------------------

def test_circle_curve_recovers_pendulum():
    curve = circle_curve(1.0, (0.0, 0.0), start="right")  # x=cos s, y=sin s
    sys_c = curve_pendulum_system(curve, lambda t: 0.0, TWO_PI)
    for s in (0.3, 1.0, 2.5):
        a = sys_c.accel(0.0, np.array([s]), np.array([0.0]))[0]
        assert abs(a + math.cos(s)) < 1e-12


def test_curve_apex_zero_accel():
    curve = circle_curve(1.0, (0.0, 0.0), start="right")
    # dy = cos(s) = 0 at the apex s = pi/2
    sys_c = curve_pendulum_system(curve, lambda t: 0.0, TWO_PI)
    assert abs(sys_c.accel(0.0, np.array([math.pi / 2]), np.array([0.0]))[0]) < 1e-12


def _ellipse_tables(a=2.0, b=1.0):
    """Independent arclength oracle: quadrature + bracketed inversion."""
    speed = lambda u: math.hypot(-a * math.sin(u), b * math.cos(u))

    def s_of_u(u):
        return quad(speed, 0.0, u, limit=200, epsabs=1e-13, epsrel=1e-13)[0]

    total = s_of_u(2 * math.pi)

    def u_of_s(s):
        return brentq(lambda u: s_of_u(u) - s, 0.0, 2 * math.pi, xtol=1e-13)

    return s_of_u, u_of_s, total


def test_ellipse_reparametrization_against_quadrature():
    a, b = 2.0, 1.0
    curve = curve_from_parametric(lambda u: a * np.cos(u), lambda u: b * np.sin(u),
                                  0.0, 2 * math.pi, closed=True)
    s_of_u, u_of_s, total = _ellipse_tables(a, b)
    assert abs(curve.length - total) < 1e-8
    curve.validate()
    sys_c = curve_pendulum_system(curve, lambda t: 0.3, TWO_PI)
    for s in (0.0, 1.3, 4.0):
        u = u_of_s(s) if s > 0 else 0.0
        sp = math.hypot(-a * math.sin(u), b * math.cos(u))
        dx_ref = -a * math.sin(u) / sp
        dy_ref = b * math.cos(u) / sp
        expected = 0.3 * dx_ref - dy_ref
        got = sys_c.accel(0.0, np.array([s]), np.array([0.0]))[0]
        assert abs(got - expected) < 1e-6


def test_natural_parametrization_speed_one():
    curve = curve_from_parametric(lambda u: 2.0 * np.cos(u), lambda u: np.sin(u),
                                  0.0, 2 * math.pi, closed=True)
    s = np.linspace(0, curve.length, 700)
    speed = np.hypot(curve.dx(s), curve.dy(s))
    assert np.max(np.abs(speed - 1.0)) < 1e-8


# --- rotating curve ---------------------------------------------------------

def _static_law():
    zero = lambda t: 0.0
    return RotationLaw(zero, zero, zero)


def test_rotating_circle_origin_reduces_to_gravity():
    curve = circle_curve(1.0, (0.0, 0.0), start="right")
    sys_r = rotating_curve_system(curve, _static_law(), TWO_PI)
    for s in (0.2, 1.1, 3.0):
        got = sys_r.accel(0.0, np.array([s]), np.array([0.0]))[0]
        assert abs(got + math.cos(s)) < 1e-12  # -dy with phi = 0


def test_rotating_curve_pure_gravity_point():
    # any point where dx = 0, dy = 1 gives accel = -1
    curve = circle_curve(1.0, (0.0, 2.0), start="bottom")  # dy(s) = sin s
    sys_r = rotating_curve_system(curve, _static_law(), TWO_PI)
    got = sys_r.accel(0.0, np.array([math.pi / 2]), np.array([0.0]))[0]
    assert abs(got + 1.0) < 1e-12


def test_rotating_curve_against_symbolic_lagrange():
    # independent oracle: derive the equation of motion symbolically from the
    # kinetic and potential energy of the rotating-frame coordinates
    import sympy as sp

    s, t = sp.symbols("s t", real=True)
    xi = sp.sin(s)
    eta = 2 - sp.cos(s)
    phi = sp.Rational(1, 10) * sp.sin(t)
    st = sp.Function("st")(t)
    xiF, etaF = xi.subs(s, st), eta.subs(s, st)
    rot = sp.Matrix([[sp.cos(phi), -sp.sin(phi)], [sp.sin(phi), sp.cos(phi)]])
    pos = rot * sp.Matrix([xiF, etaF])
    vel = pos.diff(t)
    T_energy = (vel.T * vel)[0, 0] / 2
    V_energy = pos[1]
    L = sp.simplify(T_energy - V_energy)
    eq = sp.diff(sp.diff(L, st.diff(t)), t) - sp.diff(L, st)
    sdd = sp.symbols("sdd")
    eq = eq.subs(st.diff(t, 2), sdd)
    point = {st.diff(t): 0.2, st: 0.7, t: 0.4}
    accel_sym = float(sp.solve(eq.subs(point), sdd)[0])

    curve = circle_curve(1.0, (0.0, 2.0), start="bottom")
    law = RotationLaw(phi=lambda tt: 0.1 * math.sin(tt),
                      dphi=lambda tt: 0.1 * math.cos(tt),
                      ddphi=lambda tt: -0.1 * math.sin(tt))
    sys_r = rotating_curve_system(curve, law, TWO_PI)
    got = sys_r.accel(0.4, np.array([0.7]), np.array([0.2]))[0]
    assert abs(got - accel_sym) < 1e-10


def test_vertical_tangents_unit_circle():
    curve = circle_curve(1.0, (0.0, 0.0), start="right")
    s1, s2 = vertical_tangent_params(curve, _static_law(), 0.0)
    # tangent parallel to up at s = 0, antiparallel at s = pi
    assert abs(s1 - 0.0) < 1e-10
    assert abs(s2 - math.pi) < 1e-10


def test_vertical_tangents_quarter_shift():
    curve = circle_curve(1.0, (0.0, 0.0), start="right")
    law = RotationLaw(phi=lambda t: math.pi / 2, dphi=lambda t: 0.0, ddphi=lambda t: 0.0)
    s1, s2 = vertical_tangent_params(curve, law, 0.0)
    assert abs(s1 - 3 * math.pi / 2) < 1e-10
    assert abs(s2 - 5 * math.pi / 2) < 1e-10


def test_vertical_tangents_ellipse_against_dense_scan():
    curve = curve_from_parametric(lambda u: 2.0 * np.cos(u), lambda u: np.sin(u),
                                  0.0, 2 * math.pi, closed=True)
    law = RotationLaw(phi=lambda t: 0.2, dphi=lambda t: 0.0, ddphi=lambda t: 0.0)
    s1, s2 = vertical_tangent_params(curve, law, 0.0)
    # dense-scan oracle on the alignment function
    grid = np.linspace(0, curve.length, 200001)
    align = curve.dx(grid) * math.sin(0.2) + curve.dy(grid) * math.cos(0.2)
    s_up = grid[np.argmax(align)]
    s_dn = grid[np.argmin(align)]
    if s_dn <= s_up:
        s_dn += curve.length
    assert abs(s1 - s_up) < 1e-4  # scan resolution limited
    assert abs(s2 - s_dn) < 1e-4
    # refined consistency: alignment values at the returned roots
    assert abs(curve.dx(s1) * math.sin(0.2) + curve.dy(s1) * math.cos(0.2) - 1.0) < 1e-8
    assert abs(curve.dx(s2 % curve.length) * math.sin(0.2)
               + curve.dy(s2 % curve.length) * math.cos(0.2) + 1.0) < 1e-8


# --- Morse chain ------------------------------------------------------------

def test_morse_closed_forms():
    assert abs(morse_potential(1.0)) < 1e-15
    assert abs(morse_force(1.0)) < 1e-15
    h = 1e-6
    second = (morse_force(1.0 + h) - morse_force(1.0 - h)) / (2 * h)
    assert abs(second - 1.0) < 1e-9  # V''(1) = 1
    assert abs(morse_force(2.0) - (1 - math.exp(-1)) * math.exp(-1)) < 1e-15
    assert abs(morse_force(2.0) - 0.2325442) < 5e-8


def test_morse_force_peak_quarter():
    u = np.linspace(1.0, 3.0, 400001)
    vals = morse_force(u)
    assert abs(np.max(vals) - 0.25) < 1e-9
    assert abs(u[np.argmax(vals)] - (1 + math.log(2))) < 1e-4


def test_chain_equal_spacing_balances():
    chain = ChainSpec(n=4, field=lambda t, x: np.zeros_like(x))
    sys_c = morse_chain_system(chain, 1.0)
    acc = sys_c.accel(0.0, chain.rest_positions(), np.zeros(4))
    assert np.max(np.abs(acc)) < 1e-14


def test_chain_force_matches_potential_gradient():
    n = 3
    chain = ChainSpec(n=n, field=lambda t, x: 0.1 * np.sin(x + t))
    sys_c = morse_chain_system(chain, 1.0)
    rng = np.random.default_rng(3)
    x = chain.rest_positions() + rng.uniform(-0.3, 0.3, n)

    def total_potential(xs):
        pad = np.concatenate([[0.0], xs, [2.0 * (n + 1)]])
        return float(np.sum(morse_potential(np.diff(pad))))

    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        grad = (total_potential(x + e) - total_potential(x - e)) / (2 * h)
        expected = -grad + 0.1 * math.sin(x[i] + 0.7)
        got = sys_c.accel(0.7, x, np.zeros(n))[i]
        assert abs(got - expected) < 1e-8


def test_chain_sign_report():
    T = 1.0
    chain = ChainSpec(n=3, field=lambda t, x: 0.2 * (1 + 0.5 * np.sin(2 * math.pi * t / T))
                      * (-np.sin(math.pi * x)))
    lower = [2 * i - 0.5 for i in range(1, 4)]
    upper = [2 * i + 0.5 for i in range(1, 4)]
    rep = chain_field_sign_report(chain, lower, upper, T)
    assert rep["holds"]
    assert rep["min_field_at_lower"] > 0
    assert rep["max_field_at_upper"] < 0


# --- spherical pendulum / metrics -------------------------------------------

def _sphere_system():
    return spherical_pendulum_system(lambda t, q, qd: 0.0, lambda t, q, qd: 0.0,
                                     TWO_PI, force_bound=0.0)


def test_sphere_equator_gravity_projection():
    sys_s = _sphere_system()
    acc = sys_s.accel(0.0, np.array([math.pi / 2, 0.3]), np.array([0.0, 0.0]))
    assert abs(acc[0] - 1.0) < 1e-12  # tangential gravity = sin(theta) = 1
    assert abs(acc[1]) < 1e-12


def test_sphere_hanging_equilibrium():
    sys_s = _sphere_system()
    acc = sys_s.accel(0.0, np.array([math.pi, 0.0]), np.array([0.0, 0.0]))
    assert np.max(np.abs(acc)) < 1e-10


def test_sphere_equatorial_geodesic():
    metric = sphere_polar_metric()
    sys_g = geodesic_system(metric, T=1.0, dim=2)
    tr = integrate(sys_g, 0.0, State([math.pi / 2, 0.0], [0.0, 1.0]), 3.0)
    thetas = [tr.state_at(t).q[0] for t in np.linspace(0, 3, 60)]
    assert max(abs(th - math.pi / 2) for th in thetas) < 1e-9


def test_flat_geodesics_are_straight():
    sys_g = geodesic_system(flat_metric(2), T=1.0, dim=2)
    tr = integrate(sys_g, 0.0, State([0.1, -0.2], [0.3, 0.7]), 2.0)
    end = tr.endpoint()
    assert abs(end.q[0] - (0.1 + 0.6)) < 1e-10
    assert abs(end.q[1] - (-0.2 + 1.4)) < 1e-10


def test_sphere_christoffel_closed_form():
    gamma = sphere_polar_metric().christoffel_at(np.array([math.pi / 4, 0.0]))
    assert abs(gamma[0, 1, 1] + 0.5) < 1e-12  # -sin cos at pi/4


def test_christoffel_fd_matches_closed_form():
    closed = sphere_polar_metric()
    fd_only = MetricSpec(matrix=closed.matrix, fd_step=1e-5)
    for th in (0.6, 1.1, 2.0):
        q = np.array([th, 0.4])
        diff = np.abs(fd_only.christoffel_at(q) - closed.christoffel_at(q))
        assert np.max(diff) < 1e-6


def test_christoffel_symmetry():
    for metric in (sphere_polar_metric(), sphere_stereographic_metric()):
        fd_version = MetricSpec(matrix=metric.matrix, fd_step=1e-5)
        for q in (np.array([0.8, 0.2]), np.array([1.4, -0.6])):
            for g in (metric.christoffel_at(q), fd_version.christoffel_at(q)):
                assert np.max(np.abs(g - g.transpose(0, 2, 1))) < 1e-10


def test_geodesic_energy_conservation():
    for metric in (sphere_polar_metric(), sphere_stereographic_metric()):
        sys_g = geodesic_system(metric, T=1.0, dim=2)
        q0 = np.array([1.1, 0.3])
        qd0 = np.array([0.2, 0.9])
        tr = integrate(sys_g, 0.0, State(q0, qd0), 2.0)
        e0 = metric.energy(q0, qd0)
        worst = 0.0
        for t in np.linspace(0, 2.0, 80):
            st = tr.state_at(t)
            worst = max(worst, abs(metric.energy(st.q, st.qd) - e0) / e0)
        assert worst < 1e-7


def test_singular_metric_detected():
    bad = MetricSpec(matrix=lambda q: np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(SingularMetric):
        bad.check_spd(np.array([0.0, 0.0]))


# --- growth check ------------------------------------------------------------

def test_growth_pendulum_bounded():
    sys_p = pendulum_system(lambda t, q, qd: np.sin(3 * t), TWO_PI, f_bound=1.0)
    grid = GrowthGrid(q_low=[0.0], q_high=[math.pi], qd_cap=10.0)
    rep = growth_check(sys_p, grid)
    assert rep["holds"]
    assert rep["worst_margin"] >= 0


def test_growth_quadratic_field_fails():
    sys_b = flat_system(lambda t, q, qd: qd ** 2, T=1.0, dim=1,
                        growth=GrowthBound(0.0, 1.0, 0.5))
    grid = GrowthGrid(q_low=[-1.0], q_high=[1.0], qd_cap=20.0)
    rep = growth_check(sys_b, grid)
    assert not rep["holds"]
    assert rep["worst_margin"] < 0


def test_growth_morse_chain_bound():
    n = 3
    T = 1.0
    chain = ChainSpec(n=n, field=lambda t, x: 0.2 * (1 + 0.5 * np.sin(2 * math.pi * t / T))
                      * (-np.sin(math.pi * x)))
    from dataclasses import replace

    base = morse_chain_system(chain, T)
    # a = sqrt(n) * (max|F| + 2 sup|V'|), sup|V'| = 1/4 on the barrier-limited gaps
    sys_c = replace(base, growth=GrowthBound(math.sqrt(n) * (0.3 + 2 * 0.25), 0.0, 1.0))
    lows = np.array([1.5, 3.5, 5.5])
    highs = np.array([2.5, 4.5, 6.5])
    rep = growth_check(sys_c, GrowthGrid(q_low=lows, q_high=highs, qd_cap=5.0))
    assert rep["holds"]


def test_gallery_time_periodicity():
    T = TWO_PI
    curve = circle_curve(1.0, (0.0, 2.0), start="bottom")
    law = RotationLaw(phi=lambda t: 0.1 * math.sin(t),
                      dphi=lambda t: 0.1 * math.cos(t),
                      ddphi=lambda t: -0.1 * math.sin(t))
    chain = ChainSpec(n=2, field=lambda t, x: 0.2 * np.sin(2 * math.pi * t) * np.cos(x))
    systems = [
        (pendulum_system(lambda t, q, qd: 0.5 * np.sin(t), T, f_bound=0.5),
         ([0.1], [3.0]), ([-2.0], [2.0])),
        (curve_pendulum_system(circle_curve(1.0, (0, 0), "right"), lambda t: 0.3 * math.cos(t), T),
         ([0.1], [3.0]), ([-2.0], [2.0])),
        (rotating_curve_system(curve, law, T), ([0.1], [6.0]), ([-2.0], [2.0])),
        (morse_chain_system(chain, 1.0), ([1.5, 3.5], [2.5, 4.5]), ([-1, -1], [1, 1])),
        (spherical_pendulum_system(lambda t, q, qd: 0.2 * math.sin(t),
                                   lambda t, q, qd: 0.2 * math.cos(t), T, 0.2),
         ([0.3, 0.0], [2.0, 6.0]), ([-1, -1], [1, 1])),
    ]
    for system, q_box, qd_box in systems:
        worst = check_time_periodicity(system, q_box, qd_box, n=100, tol=1e-12)
        assert worst <= 1e-12


def test_chart_singularity_on_polar_cap():
    from forcedosc.errors import ChartSingularity

    sph = _sphere_system()
    # aim straight at the pole with enough speed to cross it
    with pytest.raises(ChartSingularity):
        integrate(sph, 0.0, State([0.4, 0.0], [-1.5, 0.0]), 2.0)
