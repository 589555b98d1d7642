import hashlib
import json
import math
import os

import numpy as np
import pytest

from plotkit import PlotJob, SchemaMismatch, render
from plotkit.cli import main as cli_main

EXIT_FACES = ["wall.right.exit", "wall.left.exit", "cap.top.exit", "cap.bottom.exit"]
ENTRY_FACES = ["wall.right.entry", "wall.left.entry", "cap.top.entry", "cap.bottom.entry"]


def _fmt(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


@pytest.fixture()
def run_dir(tmp_path):
    """Synthetic run artifacts in the documented pendulum-scenario layout."""
    d = tmp_path / "run"
    d.mkdir()
    T = 2 * math.pi
    p = 3.0
    gamma = lambda t: math.pi / 2 - math.atan(0.5 * math.sin(t))

    rows = []
    for t in np.linspace(0.0, T, 8, endpoint=False):
        g = gamma(t)
        for u in np.linspace(0, 1, 12):
            rows.append(("wall.right.exit", t, 0.0, -p * (1 - u), "exit", "transversal", p * (1 - u)))
            rows.append(("wall.left.exit", t, math.pi, p * u, "exit", "transversal", p * u))
            rows.append(("cap.top.exit", t, g + (math.pi - g) * u, p, "exit", "transversal", 0.3))
            rows.append(("cap.bottom.exit", t, g * u, -p, "exit", "transversal", 0.3))
            rows.append(("wall.right.entry", t, 0.0, p * u, "entry", "transversal", -p * u))
            rows.append(("wall.left.entry", t, math.pi, -p * u, "entry", "transversal", -p * u))
            rows.append(("cap.top.entry", t, g * u, p, "entry", "transversal", -0.3))
            rows.append(("cap.bottom.entry", t, g + (math.pi - g) * u, -p, "entry", "transversal", -0.3))
    _write_csv(d / "boundary.csv",
               ["face", "t", "q1", "qd1", "pre_mark", "test", "rate"], rows)

    ts = np.linspace(0.0, T, 257)
    _write_csv(d / "gamma.csv", ["t", "gamma"], [(t, gamma(t)) for t in ts])
    _write_csv(d / "barriers.csv", ["t", "x1_1", "x2_1"],
               [(t, 0.0, math.pi) for t in ts])

    orbit = [(t, math.pi / 2 + 0.3 * math.sin(t), 0.3 * math.cos(t))
             for t in np.linspace(0.0, T, 200)]
    _write_csv(d / "orbit_000.csv", ["t", "q1", "qd1"], orbit)

    lams = [1.0, 2.0, 4.0, 8.0, 16.0]
    _write_csv(d / "lemma.csv", ["lambda", "span", "deviation", "reference"],
               [(lam, 1.0 / lam, 1.0 / (2 * lam ** 2), 1.0 / (2 * lam ** 2))
                for lam in lams])

    ss = np.linspace(0.0, T, 257)
    _write_csv(d / "curve.csv", ["s", "x", "y"],
               [(s, math.sin(s), 2.0 - math.cos(s)) for s in ss])
    _write_csv(d / "phi.csv", ["t", "phi"], [(t, 0.1 * math.sin(t)) for t in ts])

    with open(d / "report.json", "w", encoding="utf-8") as fh:
        json.dump({"scenario": "pendulum_forced", "passed": True}, fh)
    return d


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_segment_diagram_with_exit_faces_and_split_curve(run_dir, tmp_path):
    out = tmp_path / "segment.png"
    written = render(PlotJob(kind="segment", run_dir=str(run_dir), out=str(out)))
    assert written == [str(out)]
    assert out.exists() and out.stat().st_size > 10_000
    # the data layer carries all four exit faces and the split curve
    text = (run_dir / "boundary.csv").read_text()
    for face in EXIT_FACES:
        assert face in text
    gamma_rows = (run_dir / "gamma.csv").read_text().strip().splitlines()
    assert len(gamma_rows) == 258


def test_lambda_decay_slope(run_dir, tmp_path):
    out = tmp_path / "decay.png"
    render(PlotJob(kind="lambda_decay", run_dir=str(run_dir), out=str(out)))
    assert out.exists()
    rows = (run_dir / "lemma.csv").read_text().strip().splitlines()[1:]
    lam = np.array([float(r.split(",")[0]) for r in rows])
    dev = np.array([float(r.split(",")[2]) for r in rows])
    slope = np.polyfit(np.log(lam), np.log(dev), 1)[0]
    assert abs(slope - (-2.0)) < 0.2


def test_reruns_byte_identical(run_dir, tmp_path):
    hashes = []
    for sub in ("a", "b"):
        outdir = tmp_path / sub
        outdir.mkdir()
        digest = {}
        for kind, name in (("segment", "seg.png"), ("lambda_decay", "dec.png"),
                           ("phase", "phase.png"), ("chain", "chain.png")):
            out = outdir / name
            render(PlotJob(kind=kind, run_dir=str(run_dir), out=str(out)))
            digest[name] = _sha(out)
        hashes.append(digest)
    assert hashes[0] == hashes[1]


def test_phase_without_orbits_warns(run_dir, tmp_path):
    os.remove(run_dir / "orbit_000.csv")
    out = tmp_path / "phase_empty.png"
    render(PlotJob(kind="phase", run_dir=str(run_dir), out=str(out)))
    assert out.exists() and out.stat().st_size > 5_000


def test_curve_frames(run_dir, tmp_path):
    out = tmp_path / "frames"
    written = render(PlotJob(kind="curve_frames", run_dir=str(run_dir),
                             out=str(out), frames=6))
    assert len(written) == 6
    assert all(os.path.exists(p) for p in written)
    names = sorted(os.listdir(out))
    assert names[0] == "frame_0000.png"


def test_schema_mismatch_names_offending_column(run_dir, tmp_path):
    (run_dir / "boundary.csv").write_text("face,t,q1,pre_mark\nx,0,0,exit\n")
    with pytest.raises(SchemaMismatch, match="qd1"):
        render(PlotJob(kind="segment", run_dir=str(run_dir), out=str(tmp_path / "x.png")))


def test_missing_inputs_reported(tmp_path):
    with pytest.raises(SchemaMismatch, match="missing input file"):
        render(PlotJob(kind="lambda_decay", run_dir=str(tmp_path),
                       out=str(tmp_path / "x.png")))


def test_cli_roundtrip(run_dir, tmp_path, capsys):
    out = tmp_path / "cli.png"
    assert cli_main(["segment", "--in", str(run_dir), "--out", str(out)]) == 0
    assert out.exists()
    assert str(out) in capsys.readouterr().out


def test_cli_schema_error_exit_code(tmp_path, capsys):
    assert cli_main(["segment", "--in", str(tmp_path), "--out",
                     str(tmp_path / "x.png")]) == 2


def test_plotkit_never_imports_the_solver():
    import plotkit
    import plotkit.cli
    import plotkit.io
    import plotkit.render

    src_dir = os.path.dirname(plotkit.__file__)
    for name in os.listdir(src_dir):
        if name.endswith(".py"):
            with open(os.path.join(src_dir, name), encoding="utf-8") as fh:
                assert "forcedosc" not in fh.read()
