"""Numerical toolkit for forced oscillations in mechanical systems.

Verifies the boundary hypotheses that guarantee T-periodic solutions
(barrier walls, velocity cutoff bands, geodesic escape times) on concrete
systems, then locates the guaranteed orbits by period-map shooting with
topological index cross-checks.
"""

__version__ = "0.1.0"

from . import errors
from .cutoff import (
    CutoffProfile,
    apply_speed_cutoff,
    cutoff_factor,
    escape_experiment,
    escape_time_bound,
    geodesic_tracking,
    select_cutoff_speed,
)
from .integrate import (
    EventSpec,
    IntegratorConfig,
    State,
    Trajectory,
    integrate,
    integrate_batch,
    integrate_until,
)
from .orbits import (
    ConfinementReport,
    PeriodicOrbit,
    ShootConfig,
    floquet_multipliers,
    multistart_search,
    newton_shoot,
    period_map,
    verify_confinement,
    winding_index,
)
from .segments import (
    BarrierPair,
    Face,
    IndexReport,
    PeriodicSegment,
    RegionSpec,
    build_ball_segment,
    build_barrier_segment,
    build_pendulum_segment,
    cap_region,
    cap_split_angle,
    check_exit_faces,
    disk_region,
    euler_characteristics,
)
from .systems import (
    ChainSpec,
    CurveSpec,
    GrowthBound,
    MetricSpec,
    RotationLaw,
    SystemSpec,
    chain_field_sign_report,
    circle_curve,
    curve_from_parametric,
    curve_pendulum_system,
    flat_metric,
    flat_system,
    forced_metric_system,
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

__all__ = [name for name in dir() if not name.startswith("_")]
