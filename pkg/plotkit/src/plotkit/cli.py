"""plotkit command line: `plotkit <kind> --in DIR --out FILE`."""
from __future__ import annotations

import argparse
import sys

from .io import SchemaMismatch
from .render import KINDS, PlotJob, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plotkit",
                                 description="Figures from forced-osc run artifacts.")
    ap.add_argument("kind", choices=KINDS, help="figure kind")
    ap.add_argument("--in", dest="run_dir", required=True,
                    help="run directory with the CSV/JSON artifacts")
    ap.add_argument("--out", required=True,
                    help="output image path (directory for curve_frames)")
    ap.add_argument("--dpi", type=int, default=130)
    ap.add_argument("--frames", type=int, default=24,
                    help="frame count for curve_frames")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = PlotJob(kind=args.kind, run_dir=args.run_dir, out=args.out,
                  dpi=args.dpi, frames=args.frames)
    try:
        written = render(job)
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
