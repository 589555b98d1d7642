"""Command-line front end: scenario-driven verification and orbit search."""
from __future__ import annotations

import argparse
import sys

from .errors import ForcedOscError, ParseError, ValidationError
from .pipeline import run_scenario
from .scenario import GALLERY, parse_scenario


def _add_common(sub):
    sub.add_argument("file", help="scenario file (.scn, YAML syntax)")
    sub.add_argument("--out", default=None, help="output directory (default: scenario's)")
    sub.add_argument("--seed", type=int, default=None, help="sampling seed override")
    sub.add_argument("--tol", type=float, default=None, help="integrator tolerance override")
    sub.add_argument("--jobs", type=int, default=1, help="worker threads for multistart")
    sub.add_argument("--strict", action="store_true", default=True,
                     help="reject unknown scenario keys (default)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="forced-osc",
        description="Verify periodic-segment hypotheses and locate forced oscillations.")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, helptext in [
        ("run", "run the scenario's full pipeline"),
        ("verify-segment", "run only the segment verification stage"),
        ("find-orbits", "run only the orbit search stage"),
        ("lemma-demo", "run only the geodesic-tracking demo stage"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_common(p)

    sub.add_parser("list-gallery", help="list constructible system kinds")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-gallery":
        for name in GALLERY:
            print(name)
        return 0

    try:
        scenario = parse_scenario(args.file, strict=args.strict)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    stage_map = {
        "run": None,
        "verify-segment": ["verify-segment"],
        "find-orbits": ["find-orbits"],
        "lemma-demo": ["lemma-demo"],
    }
    stages = stage_map[args.command]
    try:
        result = run_scenario(scenario, out_dir=args.out, seed=args.seed,
                              tol=args.tol, jobs=args.jobs, stages=stages)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ForcedOscError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    for stage, record in result.report["stages"].items():
        status = "pass" if record.get("ok") else "FAIL"
        print(f"[{status}] {stage}")
    print(f"artifacts: {result.out_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
