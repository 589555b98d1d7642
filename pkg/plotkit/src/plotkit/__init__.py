"""Figures from forced-osc run artifacts.

plotkit consumes only the CSV/JSON files a pipeline run writes; it never
computes physics and never imports the solver package.
"""

__version__ = "0.1.0"

from .io import SchemaMismatch, read_csv, read_report
from .render import PlotJob, render

__all__ = ["PlotJob", "render", "read_csv", "read_report", "SchemaMismatch"]
