"""Run shipped scenario files through the pipeline API.

Equivalent to ``forced-osc run scenarios/<name>.scn``; artifacts (CSV data,
report.json, manifest.txt) land in out/.  Point plotkit at the output
directories to draw the figures.
"""
import os
import sys

from forcedosc.pipeline import run_scenario
from forcedosc.scenario import parse_scenario

HERE = os.path.dirname(os.path.abspath(__file__))
SCENARIOS = os.path.join(HERE, "..", "scenarios")

names = sys.argv[1:] or ["lemma_flat", "escape_disk", "pendulum_forced"]
for name in names:
    scenario = parse_scenario(os.path.join(SCENARIOS, f"{name}.scn"))
    result = run_scenario(scenario, out_dir=os.path.join("out", name))
    status = "pass" if result.passed else "FAIL"
    print(f"[{status}] {name}: artifacts in {result.out_dir}")
    for stage, record in result.report["stages"].items():
        print(f"    {stage}: {'ok' if record.get('ok') else 'failed'}")

print("\nnext: plotkit segment --in out/pendulum_forced --out figs/segment.png")
print("      plotkit lambda_decay --in out/lemma_flat --out figs/decay.png")
