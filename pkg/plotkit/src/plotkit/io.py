"""Readers for the CSV/JSON layouts the solver CLI publishes."""
from __future__ import annotations

import csv
import json
import os

import numpy as np


class SchemaMismatch(Exception):
    """Input file does not match the documented column layout."""


def read_csv(path: str, required: list[str] | None = None):
    """Read one CSV into (header, columns dict of arrays).

    ``required`` lists columns that must be present; the error names the
    first offending column.  String-valued columns stay as object arrays.
    """
    if not os.path.exists(path):
        raise SchemaMismatch(f"missing input file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file, expected a header row") from None
        rows = list(reader)
    if required:
        for col in required:
            if col not in header:
                raise SchemaMismatch(f"{path}: missing column {col!r} (have {header})")
    cols: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        values = [row[j] for row in rows]
        try:
            cols[name] = np.array([float(v) for v in values])
        except ValueError:
            cols[name] = np.array(values, dtype=object)
    return header, cols


def read_report(run_dir: str) -> dict:
    path = os.path.join(run_dir, "report.json")
    if not os.path.exists(path):
        raise SchemaMismatch(f"missing input file: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def orbit_files(run_dir: str) -> list[str]:
    names = sorted(n for n in os.listdir(run_dir)
                   if n.startswith("orbit_") and n.endswith(".csv"))
    return [os.path.join(run_dir, n) for n in names]


def state_columns(header: list[str]):
    """Split a trajectory header t,q1..qn,qd1..qdn; errors name the column."""
    if not header or header[0] != "t":
        raise SchemaMismatch(f"trajectory CSV must start with column 't', got {header[:1]}")
    qs = [h for h in header if h.startswith("q") and not h.startswith("qd")]
    qds = [h for h in header if h.startswith("qd")]
    if len(qs) != len(qds) or not qs:
        raise SchemaMismatch(f"unbalanced q/qd columns in {header}")
    return qs, qds
