"""Deterministic figure rendering for the five supported kinds."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaMismatch, orbit_files, read_csv, state_columns

KINDS = ("phase", "segment", "lambda_decay", "chain", "curve_frames")

_EXIT_COLOR = "#c62828"
_ENTRY_COLOR = "#90a4ae"
_ORBIT_COLOR = "#1565c0"


@dataclass
class PlotJob:
    """One rendering request: a run directory in, figure file(s) out."""

    kind: str
    run_dir: str
    out: str
    dpi: int = 130
    frames: int = 24
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r} (choose from {KINDS})")


def _save(fig, path, dpi):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=dpi, format="png")
    plt.close(fig)


def render(job: PlotJob) -> list[str]:
    """Render the job; returns the written file paths."""
    return {
        "phase": _render_phase,
        "segment": _render_segment,
        "lambda_decay": _render_lambda,
        "chain": _render_chain,
        "curve_frames": _render_curve_frames,
    }[job.kind](job)


def _render_phase(job: PlotJob) -> list[str]:
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    drew_orbit = False
    for path in orbit_files(job.run_dir):
        header, cols = read_csv(path, required=["t"])
        qs, qds = state_columns(header)
        ax.plot(cols[qs[0]], cols[qds[0]], lw=1.2, color=_ORBIT_COLOR)
        drew_orbit = True
    barrier_path = os.path.join(job.run_dir, "barriers.csv")
    if os.path.exists(barrier_path):
        _, bc = read_csv(barrier_path, required=["t", "x1_1", "x2_1"])
        lo, hi = float(np.min(bc["x1_1"])), float(np.max(bc["x2_1"]))
        ax.axvline(lo, color=_EXIT_COLOR, lw=1.0, ls="--")
        ax.axvline(hi, color=_EXIT_COLOR, lw=1.0, ls="--")
        ax.axvspan(lo, hi, color=_EXIT_COLOR, alpha=0.05)
    if not drew_orbit:
        ax.annotate("no orbits in this run", xy=(0.5, 0.5),
                    xycoords="axes fraction", ha="center", fontsize=12,
                    color=_EXIT_COLOR)
    ax.set_xlabel("q")
    ax.set_ylabel("dq/dt")
    ax.set_title("phase portrait with barriers")
    _save(fig, job.out, job.dpi)
    return [job.out]


def _render_segment(job: PlotJob) -> list[str]:
    header, cols = read_csv(os.path.join(job.run_dir, "boundary.csv"),
                            required=["face", "t", "q1", "qd1", "pre_mark"])
    _, gcols = read_csv(os.path.join(job.run_dir, "gamma.csv"),
                        required=["t", "gamma"])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.2),
                                   gridspec_kw={"width_ratios": [3, 2]})
    t0 = float(np.min(cols["t"]))
    at0 = np.abs(cols["t"] - t0) < 1e-12
    marks = cols["pre_mark"]
    for mark, color, size, label in (("exit", _EXIT_COLOR, 14.0, "exit set"),
                                     ("entry", _ENTRY_COLOR, 4.0, "entry set")):
        sel = at0 & (marks == mark)
        ax1.scatter(cols["q1"][sel], cols["qd1"][sel], s=size, c=color,
                    label=label, zorder=3 if mark == "exit" else 2)
    gamma0 = float(np.interp(t0, gcols["t"], gcols["gamma"]))
    ax1.axvline(gamma0, color="k", lw=0.8, ls=":")
    ax1.annotate("split angle", xy=(gamma0, 0.0), fontsize=8, rotation=90,
                 ha="right", va="center")
    ax1.set_xlabel("q")
    ax1.set_ylabel("dq/dt")
    ax1.set_title("section with exit set highlighted")
    ax1.legend(loc="center", fontsize=8)

    ax2.plot(gcols["t"], gcols["gamma"], color="k", lw=1.4)
    ax2.set_xlabel("t")
    ax2.set_ylabel("split angle(t)")
    ax2.set_title("cap split angle over one period")
    fig.tight_layout()
    _save(fig, job.out, job.dpi)
    return [job.out]


def _render_lambda(job: PlotJob) -> list[str]:
    header, cols = read_csv(os.path.join(job.run_dir, "lemma.csv"),
                            required=["lambda", "deviation"])
    lam = cols["lambda"]
    dev = cols["deviation"]
    if np.any(dev <= 0):
        raise SchemaMismatch("lemma.csv: deviations must be positive for the log plot")
    slope, intercept = np.polyfit(np.log(lam), np.log(dev), 1)
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    ax.loglog(lam, dev, "o-", color=_ORBIT_COLOR, lw=1.2)
    if "reference" in header:
        ax.loglog(lam, cols["reference"], "--", color="k", lw=0.8,
                  label="closed form")
        ax.legend(fontsize=8)
    ax.set_xlabel("launch speed factor")
    ax.set_ylabel("sup deviation from the geodesic")
    ax.set_title(f"tracking decay, fitted slope {slope:.3f}")
    ax.annotate(f"slope = {slope:.3f}", xy=(0.05, 0.08), xycoords="axes fraction",
                fontsize=10)
    fig.tight_layout()
    _save(fig, job.out, job.dpi)
    return [job.out]


def _render_chain(job: PlotJob) -> list[str]:
    paths = orbit_files(job.run_dir)
    if not paths:
        raise SchemaMismatch(f"no orbit_*.csv files in {job.run_dir}")
    header, cols = read_csv(paths[0], required=["t"])
    qs, _ = state_columns(header)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for j, qname in enumerate(qs):
        ax.plot(cols["t"], cols[qname], lw=1.3, label=f"particle {j + 1}")
    barrier_path = os.path.join(job.run_dir, "barriers.csv")
    if os.path.exists(barrier_path):
        bh, bc = read_csv(barrier_path, required=["t"])
        for j in range(len(qs)):
            lo = bc.get(f"x1_{j + 1}")
            hi = bc.get(f"x2_{j + 1}")
            if lo is not None and hi is not None:
                ax.fill_between(bc["t"], lo, hi, alpha=0.08, color=_ORBIT_COLOR)
    ax.set_xlabel("t")
    ax.set_ylabel("positions")
    ax.set_title("chain motion inside the barrier bands")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, job.out, job.dpi)
    return [job.out]


def _render_curve_frames(job: PlotJob) -> list[str]:
    _, ccols = read_csv(os.path.join(job.run_dir, "curve.csv"),
                        required=["s", "x", "y"])
    _, pcols = read_csv(os.path.join(job.run_dir, "phi.csv"),
                        required=["t", "phi"])
    paths = orbit_files(job.run_dir)
    if not paths:
        raise SchemaMismatch(f"no orbit_*.csv files in {job.run_dir}")
    header, ocols = read_csv(paths[0], required=["t", "q1"])
    os.makedirs(job.out, exist_ok=True)
    written = []
    extent = 1.1 * float(np.max(np.hypot(ccols["x"], ccols["y"])))
    times = np.linspace(float(pcols["t"][0]), float(pcols["t"][-1]), job.frames,
                        endpoint=False)
    for k, t in enumerate(times):
        phi = float(np.interp(t, pcols["t"], pcols["phi"]))
        s_mass = float(np.interp(t, ocols["t"], ocols["q1"]))
        c, s = np.cos(phi), np.sin(phi)
        xr = c * ccols["x"] - s * ccols["y"]
        yr = s * ccols["x"] + c * ccols["y"]
        xm = float(np.interp(s_mass % ccols["s"][-1], ccols["s"], ccols["x"]))
        ym = float(np.interp(s_mass % ccols["s"][-1], ccols["s"], ccols["y"]))
        xm, ym = c * xm - s * ym, s * xm + c * ym
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot(xr, yr, color="k", lw=1.2)
        ax.plot([xm], [ym], "o", color=_EXIT_COLOR, ms=8)
        ax.plot([0], [0], "+", color=_ENTRY_COLOR)
        ax.set_xlim(-extent, extent)
        ax.set_ylim(-0.2 * extent, 1.6 * extent)
        ax.set_aspect("equal")
        ax.set_title(f"t = {t:.3f}")
        path = os.path.join(job.out, f"frame_{k:04d}.png")
        _save(fig, path, job.dpi)
        written.append(path)
    return written
