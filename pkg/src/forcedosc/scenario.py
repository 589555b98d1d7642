"""Scenario files: strict YAML schema, expression parsing, object builders.

A scenario fully describes one pipeline run: the system, the segment, the
cutoff profile, the stages to execute and their knobs.  Unknown keys are
rejected (typos in physics parameters must not pass silently) and every
violation is reported at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .segments import (
    BarrierPair,
    PeriodicSegment,
    build_ball_segment,
    build_barrier_segment,
    build_pendulum_segment,
    cap_region,
)
from .systems import (
    ChainSpec,
    RotationLaw,
    SystemSpec,
    circle_curve,
    curve_from_parametric,
    curve_pendulum_system,
    flat_metric,
    flat_system,
    geodesic_system,
    morse_chain_system,
    pendulum_system,
    rotating_curve_system,
    sphere_polar_metric,
    sphere_stereographic_metric,
    spherical_pendulum_system,
    vertical_tangent_params,
    GrowthBound,
)

GALLERY = ["pendulum", "curve_pendulum", "rotating_curve", "morse_chain",
           "spherical_pendulum", "custom_flat", "geodesic"]

STAGES = ["verify-segment", "select-p", "find-orbits", "index", "lemma-demo",
          "escape-bound"]

_EXPR_ENV = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "atan": np.arctan,
    "asin": np.arcsin, "acos": np.arccos, "atan2": np.arctan2,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "sign": np.sign, "floor": np.floor, "min": np.minimum, "max": np.maximum,
    "pi": math.pi, "e": math.e,
}


class Expr:
    """A compiled scalar expression over named variables.

    Scenario files are trusted input; expressions are evaluated with a
    restricted namespace (numpy elementary functions only).
    """

    def __init__(self, text: str, variables: tuple[str, ...], where: str):
        self.text = str(text)
        self.variables = variables
        self.where = where
        try:
            self.code = compile(self.text, f"<{where}>", "eval")
        except SyntaxError as exc:
            raise ValidationError([f"{where}: bad expression {text!r}: {exc.msg}"]) from None
        for name in self.code.co_names:
            if name not in _EXPR_ENV and name not in variables:
                raise ValidationError(
                    [f"{where}: unknown name {name!r} in expression {text!r} "
                     f"(variables: {', '.join(variables)})"])

    def __call__(self, **kwargs):
        env = dict(_EXPR_ENV)
        env.update(kwargs)
        return eval(self.code, {"__builtins__": {}}, env)  # noqa: S307 - trusted scenario input


def _const(text_or_num, where) -> float:
    if isinstance(text_or_num, (int, float)):
        return float(text_or_num)
    return float(Expr(text_or_num, (), where)())


def _check_keys(data: dict, allowed: dict, path: str, errors: list):
    for key, val in data.items():
        if key not in allowed:
            errors.append(f"{path}{key}: unknown key (allowed: {', '.join(sorted(allowed))})")
            continue
        sub = allowed[key]
        if isinstance(sub, dict):
            if isinstance(val, dict):
                _check_keys(val, sub, f"{path}{key}.", errors)
            elif val is not None:
                errors.append(f"{path}{key}: expected a mapping")


_SCHEMA = {
    "schema_version": None,
    "name": None,
    "seed": None,
    "output": None,
    "system": {
        "kind": None, "period": None,
        "f": None, "f_bound": None,
        "dim": None, "accel": None,
        "curve": {"kind": None, "radius": None, "center": None, "start": None,
                  "x": None, "y": None, "u0": None, "u1": None, "closed": None},
        "phi": None, "phi_d": None, "phi_dd": None, "bound": None,
        "particles": None, "field": None,
        "force_x": None, "force_y": None, "force_bound": None,
        "metric": None, "growth": {"a": None, "b": None, "delta": None},
    },
    "segment": {
        "kind": None, "p": None,
        "x1": None, "x2": None,
        "nodes": None,
        "region": None, "eps": None,
    },
    "cutoff": {"p": None, "eps": None, "mu": None},
    "pipeline": None,
    "verify": {"samples": None, "t_samples": None},
    "index": {"policy": None, "winding": None, "collar": None, "points": None},
    "escape": {"schedule": None, "t_max": None, "samples": None},
    "search": {"grid": None, "guesses": None, "tol_residual": None,
               "max_iters": None, "band_check": None, "integrator_tol": None,
               "batch": None},
    "lemma": {"case": None, "lambdas": None, "T_geo": None, "v": None,
              "q0": None, "qd0": None, "metric": None},
    "escape_bound": {"region": None, "radius": None, "eps": None, "delta": None,
                     "geodesics": None, "cap": None, "chart": None,
                     "expect_max": None},
}


@dataclass
class Scenario:
    """Validated scenario: raw config plus compiled expressions."""

    name: str
    raw: dict
    seed: int
    output: str
    pipeline: list
    path: str = ""

    @property
    def system_cfg(self) -> dict:
        return self.raw["system"]

    @property
    def segment_cfg(self) -> dict | None:
        return self.raw.get("segment")

    @property
    def cutoff_cfg(self) -> dict | None:
        return self.raw.get("cutoff")

    def stage_cfg(self, name: str) -> dict:
        return self.raw.get(name, {}) or {}

    # --- builders ---------------------------------------------------------

    def build_system(self) -> SystemSpec:
        cfg = self.system_cfg
        kind = cfg["kind"]
        T = _const(cfg["period"], "system.period")
        if kind == "pendulum":
            f = Expr(cfg.get("f", "0"), ("t", "q", "qd"), "system.f")
            bound = cfg.get("f_bound")
            return pendulum_system(lambda t, q, qd: f(t=t, q=q, qd=qd), T,
                                   f_bound=bound)
        if kind == "custom_flat":
            dim = int(cfg["dim"])
            variables = ("t",) + tuple(f"q{i+1}" for i in range(dim)) \
                + tuple(f"qd{i+1}" for i in range(dim))
            exprs = [Expr(e, variables, f"system.accel[{i}]")
                     for i, e in enumerate(cfg["accel"])]

            def accel(t, q, qd):
                env = {"t": t}
                for i in range(dim):
                    env[f"q{i+1}"] = q[..., i]
                    env[f"qd{i+1}"] = qd[..., i]
                cols = [np.broadcast_to(np.asarray(ex(**env), dtype=float), q[..., 0].shape)
                        for ex in exprs]
                return np.stack(cols, axis=-1)

            growth = None
            if "growth" in cfg:
                g = cfg["growth"]
                growth = GrowthBound(float(g["a"]), float(g["b"]), float(g["delta"]))
            return flat_system(accel, T, dim, growth=growth)
        if kind == "curve_pendulum":
            curve = self._build_curve()
            f = Expr(cfg.get("f", "0"), ("t",), "system.f")
            return curve_pendulum_system(curve, lambda t: f(t=t), T,
                                         f_bound=cfg.get("f_bound"))
        if kind == "rotating_curve":
            curve = self._build_curve()
            law = self._build_rotation()
            return rotating_curve_system(curve, law, T, bound=cfg.get("bound"))
        if kind == "morse_chain":
            fexpr = Expr(cfg["field"], ("t", "x"), "system.field")
            chain = ChainSpec(n=int(cfg["particles"]),
                              field=lambda t, x: fexpr(t=t, x=x))
            return morse_chain_system(chain, T)
        if kind == "spherical_pendulum":
            fx = Expr(cfg["force_x"], ("t", "q1", "q2", "qd1", "qd2"), "system.force_x")
            fy = Expr(cfg["force_y"], ("t", "q1", "q2", "qd1", "qd2"), "system.force_y")

            def mk(expr):
                def fn(t, q, qd):
                    return expr(t=t, q1=q[..., 0], q2=q[..., 1],
                                qd1=qd[..., 0], qd2=qd[..., 1])
                return fn

            return spherical_pendulum_system(mk(fx), mk(fy), T,
                                             force_bound=float(cfg["force_bound"]))
        if kind == "geodesic":
            metric = _metric_by_name(cfg.get("metric", "flat"))
            return geodesic_system(metric, T=T, dim=2)
        raise ValidationError([f"system.kind: {kind!r} not in gallery {GALLERY}"])

    def _build_curve(self):
        ccfg = self.system_cfg["curve"]
        if ccfg.get("kind", "circle") == "circle":
            center = tuple(float(v) for v in ccfg.get("center", [0.0, 0.0]))
            return circle_curve(float(ccfg.get("radius", 1.0)), center,
                                start=ccfg.get("start", "bottom"))
        fx = Expr(ccfg["x"], ("u",), "system.curve.x")
        fy = Expr(ccfg["y"], ("u",), "system.curve.y")
        return curve_from_parametric(lambda u: fx(u=u), lambda u: fy(u=u),
                                     _const(ccfg.get("u0", 0.0), "system.curve.u0"),
                                     _const(ccfg.get("u1", 2 * math.pi), "system.curve.u1"),
                                     closed=bool(ccfg.get("closed", True)))

    def _build_rotation(self) -> RotationLaw:
        cfg = self.system_cfg
        phi = Expr(cfg["phi"], ("t",), "system.phi")
        dphi = Expr(cfg["phi_d"], ("t",), "system.phi_d")
        ddphi = Expr(cfg["phi_dd"], ("t",), "system.phi_dd")
        return RotationLaw(phi=lambda t: float(phi(t=t)),
                           dphi=lambda t: float(dphi(t=t)),
                           ddphi=lambda t: float(ddphi(t=t)))

    def build_segment(self, system: SystemSpec) -> PeriodicSegment:
        cfg = self.segment_cfg
        if cfg is None:
            raise ValidationError(["segment: required by the requested pipeline"])
        kind = cfg["kind"]
        T = system.period
        p = float(cfg["p"])
        if kind == "pendulum":
            f = Expr(self.system_cfg.get("f", "0"), ("t", "q", "qd"), "system.f")
            return build_pendulum_segment(lambda t: float(f(t=t, q=0.0, qd=0.0)), p, T)
        if kind == "barriers":
            lows = [Expr(e, ("t",), f"segment.x1[{i}]") for i, e in enumerate(cfg["x1"])]
            highs = [Expr(e, ("t",), f"segment.x2[{i}]") for i, e in enumerate(cfg["x2"])]
            pair = BarrierPair(
                lower=tuple((lambda ex: (lambda t: float(ex(t=t))))(ex) for ex in lows),
                upper=tuple((lambda ex: (lambda t: float(ex(t=t))))(ex) for ex in highs))
            return build_barrier_segment(pair, p, T)
        if kind == "tangent_band":
            curve = self._build_curve()
            law = self._build_rotation()
            pair = tangent_band_barriers(curve, law, T, n_nodes=int(cfg.get("nodes", 129)))
            return build_barrier_segment(pair, p, T)
        if kind == "ball":
            eps = float(cfg.get("eps", 0.1))
            region = cap_region(math.acos(eps))
            return build_ball_segment(region, p, T)
        raise ValidationError([f"segment.kind: unknown kind {kind!r}"])

    def build_cutoff(self):
        from .cutoff import CutoffProfile

        cfg = self.cutoff_cfg
        if cfg is None:
            return None
        return CutoffProfile(speed=float(cfg["p"]), width=float(cfg["eps"]),
                             friction=float(cfg.get("mu", 0.1)))


def tangent_band_barriers(curve, law, T, n_nodes: int = 129) -> BarrierPair:
    """Periodic splines through the vertical-tangent parameter curves."""
    from scipy.interpolate import CubicSpline

    ts = np.linspace(0.0, T, n_nodes)
    vals = np.array([vertical_tangent_params(curve, law, float(t)) for t in ts])
    vals[-1] = vals[0]  # enforce exact closure for the periodic spline
    sp1 = CubicSpline(ts, vals[:, 0], bc_type="periodic")
    sp2 = CubicSpline(ts, vals[:, 1], bc_type="periodic")

    def wrap(fn, der):
        return lambda t: float(fn(np.mod(t, T), der))

    return BarrierPair(lower=(wrap(sp1, 0),), upper=(wrap(sp2, 0),),
                       d_lower=(wrap(sp1, 1),), d_upper=(wrap(sp2, 1),),
                       dd_lower=(wrap(sp1, 2),), dd_upper=(wrap(sp2, 2),))


def _metric_by_name(name: str):
    if name == "flat":
        return flat_metric(2)
    if name == "sphere_polar":
        return sphere_polar_metric()
    if name == "sphere_stereographic":
        return sphere_stereographic_metric()
    raise ValidationError([f"metric: unknown metric {name!r} "
                           f"(flat, sphere_polar, sphere_stereographic)"])


def parse_scenario(path: str, strict: bool = True) -> Scenario:
    """Load and validate a scenario file.

    Raises ParseError on malformed YAML (with line diagnostics) and
    ValidationError listing every schema violation at once.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ParseError(f"scenario file not found: {path}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"could not parse {path}{loc}: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be a mapping")

    errors: list[str] = []
    if strict:
        _check_keys(data, _SCHEMA, "", errors)

    version = data.get("schema_version")
    if version != 1:
        errors.append(f"schema_version: expected 1, got {version!r}")

    sys_cfg = data.get("system")
    if not isinstance(sys_cfg, dict):
        errors.append("system: section required")
        sys_cfg = {}
    kind = sys_cfg.get("kind")
    if kind not in GALLERY:
        errors.append(f"system.kind: {kind!r} is not in the gallery "
                      f"({', '.join(GALLERY)})")
    if "period" not in sys_cfg:
        errors.append("system.period: required")

    pipeline = data.get("pipeline") or []
    if not isinstance(pipeline, list) or not pipeline:
        errors.append("pipeline: non-empty list of stages required")
        pipeline = []
    for st in pipeline:
        if st not in STAGES:
            errors.append(f"pipeline: unknown stage {st!r} (choose from {', '.join(STAGES)})")

    needs_segment = {"verify-segment", "find-orbits", "index", "select-p"}
    if needs_segment & set(pipeline) and "segment" not in data:
        errors.append("segment: required by stages "
                      f"{sorted(needs_segment & set(pipeline))}")

    # per-kind required fields
    REQUIRED = {
        "pendulum": ["f", "f_bound"],
        "custom_flat": ["dim", "accel"],
        "curve_pendulum": ["curve", "f"],
        "rotating_curve": ["curve", "phi", "phi_d", "phi_dd"],
        "morse_chain": ["particles", "field"],
        "spherical_pendulum": ["force_x", "force_y", "force_bound"],
        "geodesic": [],
    }
    if kind in REQUIRED:
        for key in REQUIRED[kind]:
            if key not in sys_cfg:
                errors.append(f"system.{key}: required for kind {kind!r}")

    seg_cfg = data.get("segment")
    if isinstance(seg_cfg, dict):
        skind = seg_cfg.get("kind")
        if skind not in ("pendulum", "barriers", "tangent_band", "ball"):
            errors.append(f"segment.kind: unknown kind {skind!r}")
        if "p" not in seg_cfg:
            errors.append("segment.p: speed cap required")
        if skind == "barriers":
            x1 = seg_cfg.get("x1")
            x2 = seg_cfg.get("x2")
            if not (isinstance(x1, list) and isinstance(x2, list) and len(x1) == len(x2) and x1):
                errors.append("segment.x1/x2: matching non-empty expression lists required")
            else:
                try:
                    period = _const(sys_cfg.get("period", 1.0), "system.period")
                    for j, (lo, hi) in enumerate(zip(x1, x2)):
                        elo = Expr(lo, ("t",), f"segment.x1[{j}]")
                        ehi = Expr(hi, ("t",), f"segment.x2[{j}]")
                        for t in np.linspace(0.0, period, 33):
                            if float(elo(t=t)) >= float(ehi(t=t)):
                                errors.append(
                                    f"segment: barrier ordering violated for coordinate {j}: "
                                    f"need x1(t) < x2(t) for all t, fails at t={t:.6g}")
                                break
                except ValidationError as exc:
                    errors.extend(exc.violations)

    if errors:
        raise ValidationError(errors)

    name = data.get("name") or path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Scenario(name=name, raw=data, seed=int(data.get("seed", 0)),
                    output=str(data.get("output", "out")),
                    pipeline=list(pipeline), path=path)
