"""
The whole pipeline from the command line
========================================

plan, run, validate, score, metrics and report, driven through the same
entry point as the `prisonsim` command, against the built-in scripted
backend and the offline lexicon scorer.
"""
import tempfile
from pathlib import Path

from prisonsim.cli import main

work = Path(tempfile.mkdtemp())
store = str(work / "store")


def prisonsim(*args):
    code = main(["--store", store, "--seed", "7", *args])
    print("exit code", code)


prisonsim("plan", "--models", "2", "--reps", "1", "--out", str(work / "plan.jsonl"))
prisonsim("run", "--plan", str(work / "plan.jsonl"), "--backend", "mock:builtin", "--parallel", "4")
prisonsim("validate")
prisonsim("score", "--scorer", "lexicon")
prisonsim("metrics")
prisonsim("analyze", "ols", "--mode", "heuristic", "--out", str(work / "ols.csv"))
prisonsim("analyze", "granger", "--mode", "heuristic", "--out", str(work / "granger.csv"))
prisonsim("report", "--out", str(work / "report.txt"))
print((work / "report.txt").read_text()[:800])
