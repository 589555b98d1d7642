"""Pipeline runner: executes scenario stages and writes artifacts.

Artifacts per run directory: ``manifest.txt`` (versions, seed, tolerances),
``report.json`` (structured stage results), per-orbit CSVs ``orbit_XXX.csv``
with columns t,q1..qn,qd1..qdn, boundary/γ/barrier CSVs for plotting, and
experiment tables.  Outputs are byte-identical across reruns with the same
scenario and seed.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cutoff import apply_speed_cutoff, escape_time_bound, geodesic_tracking, select_cutoff_speed
from .errors import ForcedOscError, NoEscape, ScheduleExhausted
from .integrate import IntegratorConfig, State, integrate
from .orbits import (
    ShootConfig,
    floquet_multipliers,
    multistart_search,
    newton_shoot,
    verify_confinement,
    winding_index,
)
from .scenario import Scenario, _metric_by_name
from .segments import check_exit_faces, disk_region, euler_characteristics
from .systems import chain_field_sign_report

_SOLVER_ERRORS = ForcedOscError


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def orbit_csv_rows(orbit, n_dense: int = 1025):
    traj = orbit.trajectory
    for t in np.linspace(traj.t0, traj.t1, n_dense):
        st = traj.state_at(float(t))
        yield (float(t), *st.q.tolist(), *st.qd.tolist())


@dataclass
class RunResult:
    exit_code: int
    report: dict
    out_dir: str

    @property
    def passed(self) -> bool:
        return self.exit_code == 0


@dataclass
class _Ctx:
    scenario: Scenario
    out: str
    seed: int
    jobs: int
    tol: float | None
    system: object = None
    segment: object = None
    profile: object = None
    verified: bool = False
    index_report: object = None
    orbits: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)

    def integrator(self) -> IntegratorConfig:
        tol = self.tol if self.tol is not None else 1e-10
        return IntegratorConfig(rel_tol=tol, abs_tol=tol)

    def verification_system(self):
        """System the segment faces are classified against."""
        seg_kind = (self.scenario.segment_cfg or {}).get("kind")
        if seg_kind in ("barriers", "tangent_band", "ball") and self.profile is not None:
            return apply_speed_cutoff(self.system, self.profile)
        return self.system


def run_scenario(scenario: Scenario, out_dir: str | None = None,
                 seed: int | None = None, tol: float | None = None,
                 jobs: int = 1, stages: list[str] | None = None) -> RunResult:
    """Execute the scenario pipeline and write artifacts into out_dir."""
    out = out_dir or scenario.output
    os.makedirs(out, exist_ok=True)
    ctx = _Ctx(scenario=scenario, out=out,
               seed=scenario.seed if seed is None else int(seed),
               jobs=jobs, tol=tol)
    report: dict = {
        "scenario": scenario.name,
        "schema_version": 1,
        "seed": ctx.seed,
        "stages": {},
        "passed": True,
    }
    ctx.system = scenario.build_system()
    ctx.profile = scenario.build_cutoff()
    if scenario.segment_cfg is not None:
        ctx.segment = scenario.build_segment(ctx.system)
    ctx.tolerances["integrator.rel_tol"] = ctx.integrator().rel_tol
    ctx.tolerances["integrator.abs_tol"] = ctx.integrator().abs_tol

    # chain scenarios always carry the barrier-field sign report
    if ctx.system.name == "morse_chain" and ctx.segment is not None:
        report["chain_signs"] = _chain_signs(ctx)
        if not report["chain_signs"]["holds"]:
            report["passed"] = False

    # rotating-curve scenarios export their geometry for the plot tooling
    if scenario.system_cfg.get("kind") == "rotating_curve":
        curve = scenario._build_curve()
        law = scenario._build_rotation()
        ss = np.linspace(0.0, curve.length, 257)
        write_csv(os.path.join(out, "curve.csv"), ["s", "x", "y"],
                  [(float(s), float(curve.x(s)), float(curve.y(s))) for s in ss])
        ts = np.linspace(0.0, ctx.system.period, 257)
        write_csv(os.path.join(out, "phi.csv"), ["t", "phi"],
                  [(float(t), float(law.phi(t))) for t in ts])

    runners = {
        "verify-segment": _stage_verify,
        "index": _stage_index,
        "select-p": _stage_select_p,
        "find-orbits": _stage_find_orbits,
        "lemma-demo": _stage_lemma,
        "escape-bound": _stage_escape_bound,
    }
    for stage in (stages or scenario.pipeline):
        ok, record = runners[stage](ctx)
        report["stages"][stage] = record
        record["ok"] = ok
        if not ok:
            report["passed"] = False
            break

    _write_manifest(ctx)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return RunResult(exit_code=0 if report["passed"] else 1, report=report, out_dir=out)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"unserializable {type(obj)}")


def _write_manifest(ctx: _Ctx) -> None:
    import numpy
    import scipy

    lines = [
        f"forcedosc {__version__}",
        f"numpy {numpy.__version__}",
        f"scipy {scipy.__version__}",
        f"scenario {ctx.scenario.name}",
        "schema_version 1",
        f"seed {ctx.seed}",
        f"jobs {ctx.jobs}",
        "tolerances:",
    ]
    for key in sorted(ctx.tolerances):
        lines.append(f"  {key} {_fmt(ctx.tolerances[key])}")
    with open(os.path.join(ctx.out, "manifest.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _stage_verify(ctx: _Ctx):
    cfg = ctx.scenario.stage_cfg("verify")
    n_samples = int(cfg.get("samples", 300))
    n_t = int(cfg.get("t_samples", 16))
    ctx.tolerances["verify.strict_tol"] = 1e-9
    system = ctx.verification_system()
    ver = check_exit_faces(system, ctx.segment, n_samples=n_samples, n_t=n_t,
                           on_unresolved="report")
    dim = ctx.segment.dim
    qcols = [f"q{i+1}" for i in range(dim)]
    vcols = [f"qd{i+1}" for i in range(dim)]
    write_csv(os.path.join(ctx.out, "boundary.csv"),
              ["face", "t", *qcols, *vcols, "pre_mark", "test", "rate"],
              ver.boundary_rows())
    record = {"passed": ver.passed,
              "faces": {k: v.as_dict() for k, v in ver.faces.items()},
              "verified_against": system.name}
    if ctx.segment.kind == "box" and ctx.segment.notes.get("style") == "pendulum":
        split = ctx.segment.notes["split_angle"]
        ts = np.linspace(0.0, ctx.segment.period, 257)
        write_csv(os.path.join(ctx.out, "gamma.csv"), ["t", "gamma"],
                  [(float(t), float(split(t))) for t in ts])
    if ctx.segment.kind == "box":
        ts = np.linspace(0.0, ctx.segment.period, 257)
        rows = []
        for t in ts:
            rows.append((float(t), *ctx.segment.barriers.lower_at(t).tolist(),
                         *ctx.segment.barriers.upper_at(t).tolist()))
        write_csv(os.path.join(ctx.out, "barriers.csv"),
                  ["t", *[f"x1_{j+1}" for j in range(dim)],
                   *[f"x2_{j+1}" for j in range(dim)]], rows)
    ctx.verified = ver.passed
    return ver.passed, record


def _chain_signs(ctx: _Ctx):
    sys_cfg = ctx.scenario.system_cfg
    from .scenario import Expr

    fexpr = Expr(sys_cfg["field"], ("t", "x"), "system.field")
    chain = ChainLike(int(sys_cfg["particles"]), lambda t, x: fexpr(t=t, x=x))
    lower = ctx.segment.barriers.lower_at(0.0)
    upper = ctx.segment.barriers.upper_at(0.0)
    return chain_field_sign_report(chain, lower, upper, ctx.system.period)


class ChainLike:
    def __init__(self, n, field_fn):
        self.n = n
        self.field = field_fn


def _stage_index(ctx: _Ctx):
    cfg = ctx.scenario.stage_cfg("index")
    assume = not ctx.verified
    if assume:
        for f in ctx.segment.faces:
            if f.classification == "unresolved":
                f.classification = f.pre_mark
        note = "pre-marked faces (verification not run or not passed)"
    else:
        note = "verified faces"
    idx = euler_characteristics(ctx.segment)
    ctx.index_report = idx
    record = {"euler": idx.as_dict(), "basis": note}
    do_winding = bool(cfg.get("winding", ctx.segment.dim == 1)) and ctx.segment.dim == 1
    if do_winding:
        collar = float(cfg.get("collar", 0.08))
        points = int(cfg.get("points", 64))
        contour = ctx.segment.inner_contour(collar)
        w = winding_index(ctx.system, contour, n_points=points, cfg=ctx.integrator())
        record["winding"] = w
        record["winding_matches"] = (w == idx.index)
        ctx.tolerances["index.collar"] = collar
        if not record["winding_matches"]:
            return False, record
    return True, record


def _stage_select_p(ctx: _Ctx):
    cfg = ctx.scenario.stage_cfg("escape")
    schedule = [float(p) for p in cfg.get("schedule", [2, 5, 10, 20, 40])]
    t_max = float(cfg.get("t_max", 1.0))
    samples = int(cfg.get("samples", 48))
    eps = ctx.profile.width if ctx.profile else 1.0
    mu = ctx.profile.friction if ctx.profile else 0.1
    ctx.tolerances["escape.t_max"] = t_max
    try:
        p_star, table = select_cutoff_speed(ctx.system, ctx.segment, eps, schedule,
                                            t_max, friction=mu, n_samples=samples)
    except ScheduleExhausted as exc:
        write_csv(os.path.join(ctx.out, "escape.csv"),
                  ["p", "tested", "escaped", "max_escape_time", "passed"], [])
        return False, {"error": str(exc), "schedule": schedule}
    rows = [(p, rep.tested, rep.escaped, rep.max_escape_time, int(rep.passed))
            for p, rep in table]
    write_csv(os.path.join(ctx.out, "escape.csv"),
              ["p", "tested", "escaped", "max_escape_time", "passed"], rows)
    pass_set = [p for p, rep in table if rep.passed]
    upward_closed = all(p >= p_star for p in pass_set) and \
        all(rep.passed for p, rep in table if p >= p_star)
    record = {"p_star": p_star, "table": [
        {"p": p, "passed": rep.passed, "escaped": rep.escaped,
         "tested": rep.tested, "max_escape_time": rep.max_escape_time}
        for p, rep in table], "upward_closed": upward_closed}
    shipped_ok = True
    if ctx.profile is not None:
        from .cutoff import escape_experiment

        rep = escape_experiment(ctx.system, ctx.segment, ctx.profile,
                                n_samples=samples, t_max=t_max)
        record["shipped_profile"] = rep.as_dict()
        shipped_ok = rep.passed
    return bool(upward_closed and shipped_ok), record


def _stage_find_orbits(ctx: _Ctx):
    cfg = ctx.scenario.stage_cfg("search")
    grid = cfg.get("grid", [8, 8])
    itol = float(cfg.get("integrator_tol", 1e-11)) if ctx.tol is None else ctx.tol
    shoot = ShootConfig(tol_residual=float(cfg.get("tol_residual", 1e-9)),
                        max_iters=int(cfg.get("max_iters", 50)),
                        integrator=IntegratorConfig(rel_tol=itol, abs_tol=itol))
    ctx.tolerances["search.integrator_tol"] = itol
    ctx.tolerances["search.tol_residual"] = shoot.tol_residual
    ctx.tolerances["search.dedup"] = 1e-6
    orbits = multistart_search(ctx.system, ctx.segment, grid, shoot, jobs=ctx.jobs)
    for guess in cfg.get("guesses", []) or []:
        half = len(guess) // 2
        try:
            orb = newton_shoot(ctx.system, State(guess[:half], guess[half:]), shoot)
        except _SOLVER_ERRORS:
            continue
        rep = verify_confinement(orb, ctx.segment, 512)
        if rep.ok and all(
                max(np.max(np.abs(ctx.system.wrap_delta(orb.s0.q - o.s0.q))),
                    np.max(np.abs(orb.s0.qd - o.s0.qd))) >= 1e-6 for o in orbits):
            orb.barrier_margin = rep.min_margin
            orbits.append(orb)
    orbits.sort(key=lambda o: o.sort_key())

    band_limit = None
    if ctx.profile is not None and bool(cfg.get("band_check", True)):
        band_limit = ctx.profile.speed - ctx.profile.width

    tight = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-12)
    summaries = []
    for k, orb in enumerate(orbits):
        conf = verify_confinement(orb, ctx.segment, 512, band_limit=band_limit)
        recheck = integrate(ctx.system, 0.0, orb.s0, ctx.system.period, tight)
        end = recheck.endpoint()
        dq = ctx.system.wrap_delta(end.q - orb.s0.q)
        mismatch = float(max(np.max(np.abs(dq)), np.max(np.abs(end.qd - orb.s0.qd))))
        sign_det = None
        if orb.floquet is not None:
            det_im_dp = np.prod(1.0 - orb.floquet)
            sign_det = int(np.sign(det_im_dp.real))
        write_csv(os.path.join(ctx.out, f"orbit_{k:03d}.csv"),
                  ["t", *[f"q{i+1}" for i in range(ctx.system.dim)],
                   *[f"qd{i+1}" for i in range(ctx.system.dim)]],
                  orbit_csv_rows(orb))
        summaries.append({
            "initial_q": orb.s0.q.tolist(),
            "initial_qd": orb.s0.qd.tolist(),
            "residual": orb.residual_norm,
            "margins": conf.as_dict(),
            "reintegration_mismatch": mismatch,
            "multipliers": None if orb.floquet is None else
                [{"re": z.real, "im": z.imag} for z in orb.floquet],
            "local_index_sign": sign_det,
        })
    ctx.orbits = orbits
    record = {"count": len(orbits), "orbits": summaries}

    policy = ctx.scenario.stage_cfg("index").get("policy", "enforce")
    idx_nonzero = ctx.index_report is not None and ctx.index_report.index != 0
    if not orbits and ctx.verified and idx_nonzero and policy == "enforce":
        _dump_residual_grid(ctx, grid)
        record["contradiction"] = (
            "verified segment with nonzero index produced an empty orbit list; "
            "residual grid dumped to residual_grid.csv")
        return False, record
    if not orbits and policy == "enforce" and ctx.verified and ctx.index_report is None:
        record["note"] = "no orbits found; index unknown"
    return (len(orbits) > 0 or policy == "ignore"), record


def _dump_residual_grid(ctx: _Ctx, grid):
    rows = []
    shoot_cfg = ctx.integrator()
    for node in ctx.segment.interior_points(grid):
        try:
            traj = integrate(ctx.system, 0.0, node, ctx.system.period, shoot_cfg)
            end = traj.endpoint()
            dq = ctx.system.wrap_delta(end.q - node.q)
            resid = float(np.sqrt(np.sum(dq ** 2) + np.sum((end.qd - node.qd) ** 2)))
        except ForcedOscError:
            resid = float("nan")
        rows.append((*node.q.tolist(), *node.qd.tolist(), resid))
    write_csv(os.path.join(ctx.out, "residual_grid.csv"),
              [*[f"q{i+1}" for i in range(ctx.system.dim)],
               *[f"qd{i+1}" for i in range(ctx.system.dim)], "residual"], rows)


def _stage_lemma(ctx: _Ctx):
    cfg = ctx.scenario.stage_cfg("lemma")
    case = cfg.get("case", "flat_constant")
    lambdas = [float(v) for v in cfg.get("lambdas", [1, 2, 4, 8, 16])]
    T_geo = float(cfg.get("T_geo", 1.0))
    if case == "flat_constant":
        from .systems import flat_metric

        metric = flat_metric(2)
        v_vec = np.asarray(cfg.get("v", [1.0, 0.0]), dtype=float)
        forcing = lambda t, q, qd: v_vec
        q0 = np.asarray(cfg.get("q0", [0.0, 0.0]), dtype=float)
        qd0 = np.asarray(cfg.get("qd0", [0.0, 1.0]), dtype=float)
    elif case == "sphere":
        from .scenario import Expr

        metric = _metric_by_name(cfg.get("metric", "sphere_polar"))
        exprs = [Expr(e, ("t",), f"lemma.v[{i}]") for i, e in enumerate(
            cfg.get("v", ["0.25*cos(2*t)", "0.2*sin(t)"]))]
        forcing = lambda t, q, qd: np.array([float(ex(t=t)) for ex in exprs])
        q0 = np.asarray(cfg.get("q0", [math.pi / 2, 0.0]), dtype=float)
        qd0 = np.asarray(cfg.get("qd0", [0.0, 1.0]), dtype=float)
    else:
        return False, {"error": f"unknown lemma case {case!r}"}

    rows = geodesic_tracking(metric, forcing, q0, qd0, T_geo, lambdas)
    csv_rows = []
    ok = True
    checks = {}
    if case == "flat_constant":
        scale = float(np.max(np.abs(v_vec)))
        worst = 0.0
        for r in rows:
            ref = scale * (T_geo / r["lam"]) ** 2 / 2.0
            worst = max(worst, abs(r["deviation"] - ref))
            csv_rows.append((r["lam"], r["span"], r["deviation"], ref))
        checks["max_closed_form_error"] = worst
        ok = worst < 1e-6
        ctx.tolerances["lemma.closed_form_tol"] = 1e-6
        header = ["lambda", "span", "deviation", "reference"]
    else:
        devs = [r["deviation"] for r in rows]
        ok = all(devs[i + 1] < devs[i] for i in range(len(devs) - 1))
        checks["strictly_decreasing"] = ok
        csv_rows = [(r["lam"], r["span"], r["deviation"]) for r in rows]
        header = ["lambda", "span", "deviation"]
    write_csv(os.path.join(ctx.out, "lemma.csv"), header, csv_rows)
    return ok, {"case": case, "rows": rows, **checks}


def _stage_escape_bound(ctx: _Ctx):
    cfg = ctx.scenario.stage_cfg("escape_bound")
    chart = cfg.get("chart", "flat")
    metric = _metric_by_name(chart)
    region_kind = cfg.get("region", "disk")
    if region_kind == "disk":
        radius = float(cfg.get("radius", 1.0))
        region = disk_region(radius, metric=metric)
    elif region_kind == "cap":
        eps = float(cfg.get("eps", 0.1))
        radius = math.sqrt((1.0 - eps) / (1.0 + eps))  # cap boundary in stereographic chart
        region = disk_region(radius, metric=metric)
    else:
        return False, {"error": f"unknown region {region_kind!r}"}
    delta = float(cfg.get("delta", 0.1))
    n_geo = int(cfg.get("geodesics", 96))
    cap = float(cfg.get("cap", 10.0))
    try:
        tau, rows = escape_time_bound(metric, region, delta, n_geodesics=n_geo,
                                      hard_cap=cap)
    except NoEscape as exc:
        return False, {"error": str(exc)}
    write_csv(os.path.join(ctx.out, "escape_bound.csv"),
              ["q1", "q2", "qd1", "qd2", "t_exit"], rows)
    record = {"tau": tau, "geodesics": len(rows), "delta": delta, "chart": chart}
    expect = cfg.get("expect_max")
    if expect is not None:
        record["expect_max"] = float(expect)
        return tau <= float(expect), record
    return True, record
