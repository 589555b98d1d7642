"""Tour of the system gallery: construction, growth bounds, escape times."""
import math

import numpy as np

from forcedosc import (
    ChainSpec,
    RotationLaw,
    circle_curve,
    disk_region,
    escape_time_bound,
    flat_metric,
    growth_check,
    morse_chain_system,
    pendulum_system,
    rotating_curve_system,
    sphere_stereographic_metric,
    spherical_pendulum_system,
)
from forcedosc.systems import GrowthGrid

T = 2 * math.pi

print("pendulum with bounded pivot force: growth bound (1 + C, 0, 1)")
system = pendulum_system(lambda t, q, qd: np.sin(3 * t), T, f_bound=1.0)
rep = growth_check(system, GrowthGrid(q_low=[0.0], q_high=[math.pi], qd_cap=10.0))
print(f"   holds={rep['holds']}, worst margin={rep['worst_margin']:.3f}")

print("\nmass on a rocking circle (radius 1 about (0,2))")
curve = circle_curve(1.0, (0.0, 2.0), start="bottom")
law = RotationLaw(phi=lambda t: 0.1 * math.sin(t),
                  dphi=lambda t: 0.1 * math.cos(t),
                  ddphi=lambda t: -0.1 * math.sin(t))
rot = rotating_curve_system(curve, law, T, bound=1.5)
print(f"   field at the top of the circle: {rot.accel(0.0, np.array([math.pi]), np.array([0.0]))[0]:+.4f}")

print("\nMorse chain: three particles between anchors at 0 and 8")
chain = ChainSpec(n=3, field=lambda t, x: 0.2 * (1 + 0.5 * np.sin(2 * math.pi * t))
                  * (-np.sin(math.pi * x)))
sys_chain = morse_chain_system(chain, 1.0)
print(f"   rest configuration balances: "
      f"{np.max(np.abs(sys_chain.accel(0.0, chain.rest_positions(), np.zeros(3)))):.1e}")

print("\nspherical pendulum: gravity projection at the equator")
sph = spherical_pendulum_system(lambda t, q, qd: 0.0, lambda t, q, qd: 0.0, T, 0.0)
print(f"   accel_theta at theta=pi/2: "
      f"{sph.accel(0.0, np.array([math.pi / 2, 0.0]), np.zeros(2))[0]:.3f}")

print("\nescape times of unit-speed geodesics")
tau, _ = escape_time_bound(flat_metric(2), disk_region(1.0), delta=0.1,
                           n_geodesics=120, hard_cap=5.0)
print(f"   flat disk, delta=0.1: tau = {tau:.3f} (supremum 2.1)")
metric = sphere_stereographic_metric()
rd = math.sqrt((1 - 0.1) / (1 + 0.1))
tau, _ = escape_time_bound(metric, disk_region(rd, metric=metric), delta=0.05,
                           n_geodesics=120, hard_cap=8.0)
print(f"   spherical cap (r,e_z) > 0.1: tau = {tau:.3f} (great circles: <= pi)")
