"""Acceptance suite: one test per shipped criterion.

Each test runs (or reuses) the relevant scenario pipeline at its pinned
tolerances and prints one pass line; run with ``pytest tests/test_acceptance.py
-v -s`` to see them.
"""
import json
import math
import os

import numpy as np
import pytest

from forcedosc.pipeline import run_scenario
from forcedosc.scenario import parse_scenario

SCENARIOS = os.path.join(os.path.dirname(__file__), "..", "scenarios")
E2PI = math.exp(2 * math.pi)


def _run(name, tmp_factory):
    sc = parse_scenario(os.path.join(SCENARIOS, f"{name}.scn"))
    out = tmp_factory.mktemp(f"acc_{name}")
    return run_scenario(sc, out_dir=str(out))


@pytest.fixture(scope="session")
def forced(tmp_path_factory):
    return _run("pendulum_forced", tmp_path_factory)


@pytest.fixture(scope="session")
def autonomous(tmp_path_factory):
    return _run("pendulum_autonomous", tmp_path_factory)


@pytest.fixture(scope="session")
def lifted(tmp_path_factory):
    return _run("pendulum_lifted", tmp_path_factory)


@pytest.fixture(scope="session")
def rotating(tmp_path_factory):
    return _run("rotating_curve", tmp_path_factory)


@pytest.fixture(scope="session")
def chain(tmp_path_factory):
    return _run("morse_chain", tmp_path_factory)


@pytest.fixture(scope="session")
def sphere(tmp_path_factory):
    return _run("spherical_pendulum", tmp_path_factory)


def test_c01_forced_pendulum_pipeline(forced):
    r = forced.report
    assert forced.passed
    ver = r["stages"]["verify-segment"]
    assert ver["ok"]
    for face, rep in ver["faces"].items():
        assert rep["ok"], face
        if rep["min_first_order_margin"] is not None and rep["samples"] > rep["tangent_samples"]:
            assert rep["min_first_order_margin"] > 0
        if rep["tangent_samples"]:
            assert rep["min_second_order_margin"] > 0
    idx = r["stages"]["index"]["euler"]
    assert (idx["chi_section"], idx["chi_exit"], idx["index"]) == (1, 2, -1)
    orbits = r["stages"]["find-orbits"]["orbits"]
    assert len(orbits) >= 1
    for orb in orbits:
        assert orb["residual"] < 1e-9
        margins = orb["margins"]["margins"]
        assert min(margins[0], margins[1]) > 0.01  # q(t) in (0, pi) with margin
        assert orb["margins"]["min_margin"] > 0
        assert orb["reintegration_mismatch"] < 1e-8
    print("ACCEPTANCE PASS: forced pendulum pipeline "
          f"(index -1, {len(orbits)} orbit(s), reintegration "
          f"{orbits[0]['reintegration_mismatch']:.2e})")


def test_c02_index_cross_validation(forced, autonomous, lifted):
    for name, run in (("0.5 sin t", forced), ("0", autonomous), ("1 + 0.3 cos t", lifted)):
        idx = run.report["stages"]["index"]
        assert idx["euler"]["index"] == -1, name
        assert idx["winding"] == -1, name
        assert idx["winding"] == idx["euler"]["index"], name
    print("ACCEPTANCE PASS: winding == euler index == -1 for all three forcings")


def test_c03_autonomous_multistart_oracle(autonomous):
    fo = autonomous.report["stages"]["find-orbits"]
    assert fo["count"] == 1  # dedup across the 50x50 grid
    orb = fo["orbits"][0]
    assert abs(orb["initial_q"][0] - math.pi / 2) < 1e-6
    assert abs(orb["initial_qd"][0]) < 1e-6
    mags = sorted(abs(complex(m["re"], m["im"])) for m in orb["multipliers"])
    assert abs(mags[1] - E2PI) / E2PI < 0.01
    assert abs(mags[0] - 1 / E2PI) / (1 / E2PI) < 0.01
    print(f"ACCEPTANCE PASS: unique saddle orbit, multipliers {mags[1]:.2f}, {mags[0]:.5f}")


def test_c04_tracking_demo(tmp_path_factory):
    flat = _run("lemma_flat", tmp_path_factory)
    assert flat.passed
    rows = flat.report["stages"]["lemma-demo"]["rows"]
    assert [r["lam"] for r in rows] == [1, 2, 4, 8, 16]
    worst = max(abs(r["deviation"] - 1.0 / (2 * r["lam"] ** 2)) for r in rows)
    assert worst < 1e-6
    sphere_demo = _run("lemma_sphere", tmp_path_factory)
    assert sphere_demo.passed
    devs = [r["deviation"] for r in sphere_demo.report["stages"]["lemma-demo"]["rows"]]
    assert all(b < a for a, b in zip(devs, devs[1:]))
    print(f"ACCEPTANCE PASS: flat tracking matches 1/(2 lam^2) to {worst:.1e}; "
          "sphere deviations strictly decrease")


def test_c05_cutoff_construction(forced, lifted, rotating, chain):
    from forcedosc.cutoff import CutoffProfile, cutoff_factor

    profile = CutoffProfile(speed=2.0, width=0.5, friction=0.1)
    p, e = profile.speed, profile.width
    assert cutoff_factor(profile, 0.0) == 1.0
    assert cutoff_factor(profile, p) == 0.0
    assert 0.0 < cutoff_factor(profile, p - 3 * e / 4) < 1.0
    band = np.linspace(p - e, p - e / 2, 300)
    assert np.all(np.diff(cutoff_factor(profile, band)) <= 1e-15)
    rng = np.random.default_rng(5)
    speeds = rng.uniform(0, 5, 10000)
    vals = rng.normal(size=10000) * 3
    chi = cutoff_factor(profile, speeds)
    assert np.all(np.abs(chi * vals) <= np.abs(vals) + 1e-15)
    for name, run in (("pendulum_forced", forced), ("pendulum_lifted", lifted),
                      ("rotating_curve", rotating), ("morse_chain", chain)):
        sel = run.report["stages"]["select-p"]
        assert sel["shipped_profile"]["passed"], name
        assert sel["upward_closed"], name
    print("ACCEPTANCE PASS: cutoff exact values, monotonicity, dominance at 1e4 "
          "samples; escape passes for every shipped profile, pass set upward-closed")


def test_c06_spherical_pendulum(sphere):
    r = sphere.report
    assert sphere.passed
    tau = r["stages"]["escape-bound"]["tau"]
    assert tau <= math.pi + 0.1
    orbits = r["stages"]["find-orbits"]["orbits"]
    assert len(orbits) >= 1
    csv = os.path.join(sphere.out_dir, "orbit_000.csv")
    rows = np.loadtxt(csv, delimiter=",", skiprows=1)
    min_height = float(np.min(np.cos(rows[:, 1])))
    assert min_height > 0.1  # (r, e_z) > eps at all dense samples
    print(f"ACCEPTANCE PASS: sphere escape tau = {tau:.3f} <= pi + 0.1, orbit "
          f"with min (r,e_z) = {min_height:.3f}")


def test_c07_rotating_curve(rotating):
    from forcedosc.scenario import parse_scenario as ps
    from forcedosc.systems import circle_curve, RotationLaw, vertical_tangent_params

    r = rotating.report
    assert rotating.passed
    assert r["stages"]["verify-segment"]["ok"]
    orbits = r["stages"]["find-orbits"]["orbits"]
    assert len(orbits) >= 1
    assert all(o["margins"]["min_margin"] > 0 for o in orbits)
    # smoothness of the tangent-point curves on the grid
    curve = circle_curve(1.0, (0.0, 2.0), start="bottom")
    law = RotationLaw(phi=lambda t: 0.1 * math.sin(t),
                      dphi=lambda t: 0.1 * math.cos(t),
                      ddphi=lambda t: -0.1 * math.sin(t))
    ts = np.linspace(0.0, 2 * math.pi, 65)
    vals = np.array([vertical_tangent_params(curve, law, float(t)) for t in ts])
    jump = max(float(np.max(np.abs(np.diff(vals[:, 0])))),
               float(np.max(np.abs(np.diff(vals[:, 1])))))
    assert jump < 0.05
    print(f"ACCEPTANCE PASS: rotating curve verified, orbit confined between the "
          f"tangent curves, max root jump {jump:.4f} < 0.05")


def test_c08_morse_chain(chain):
    r = chain.report
    assert chain.passed
    signs = r["chain_signs"]
    assert signs["holds"]
    assert signs["min_field_at_lower"] > 0
    assert signs["max_field_at_upper"] < 0
    # the closed-form sign values: sin(pi (2i -+ 1/2)) = -+1
    for i in (1, 2, 3):
        assert abs(math.sin(math.pi * (2 * i - 0.5)) + 1.0) < 1e-12
        assert abs(math.sin(math.pi * (2 * i + 0.5)) - 1.0) < 1e-12
    orbits = r["stages"]["find-orbits"]["orbits"]
    assert len(orbits) >= 1
    best = max(o["margins"]["min_margin"] for o in orbits)
    assert best > 0.05
    print(f"ACCEPTANCE PASS: chain field signs hold, confined orbit margin {best:.3f}")


def test_c09_hamel_equation(tmp_path_factory):
    run = _run("hamel", tmp_path_factory)
    assert run.passed
    orbits = run.report["stages"]["find-orbits"]["orbits"]
    assert len(orbits) >= 1
    assert all(o["residual"] < 1e-9 for o in orbits)
    print(f"ACCEPTANCE PASS: Hamel equation has a 2pi-periodic solution, residual "
          f"{orbits[0]['residual']:.1e}")


CONTRADICTION = """\
schema_version: 1
name: synthetic_contradiction
seed: 0
output: unused
system:
  kind: pendulum
  period: "2*pi"
  f: "0.5*sin(t)"
  f_bound: 0.5
segment: {{kind: pendulum, p: 3.0}}
pipeline: [verify-segment, index, find-orbits]
verify: {{samples: 120, t_samples: 8}}
index: {{policy: {policy}, winding: false}}
search: {{grid: [2, 2], max_iters: 1, tol_residual: 1.0e-12}}
"""


def test_c10_contradiction_policy(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("contradiction")
    enforce = tmp / "enforce.scn"
    enforce.write_text(CONTRADICTION.format(policy="enforce"))
    res = run_scenario(parse_scenario(str(enforce)), out_dir=str(tmp / "out_e"))
    assert res.exit_code == 1
    assert "contradiction" in res.report["stages"]["find-orbits"]
    assert (tmp / "out_e" / "residual_grid.csv").exists()

    mutated = tmp / "ignore.scn"
    mutated.write_text(CONTRADICTION.format(policy="ignore"))
    res2 = run_scenario(parse_scenario(str(mutated)), out_dir=str(tmp / "out_i"))
    assert res2.exit_code == 0
    print("ACCEPTANCE PASS: empty orbit list in a verified nonzero-index segment "
          "is a hard failure; disabling the check lets it slip (mutation demo)")
