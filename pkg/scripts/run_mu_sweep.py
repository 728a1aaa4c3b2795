#!/usr/bin/env python3
"""Coupling sweep: map the damping regime by fitting the decay rate per mu.

Below the synchronization threshold the fitted rate stays positive and moves
smoothly with mu; pushing mu toward the threshold (2 / (pi g(0)) ~ 1.6 for the
unit Gaussian) degrades and then destroys the decay.  Rows that fail
numerically are recorded in the summary rather than aborting the sweep.
"""
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from dephase.cli import main  # noqa: E402

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/mu_sweep"
    values = sys.argv[2] if len(sys.argv) > 2 else "0.0,0.05,0.1,0.2,0.4"
    threads = sys.argv[3] if len(sys.argv) > 3 else "1"
    config = str(ROOT / "configs" / "reference.toml")
    code = main([
        "sweep", "--config", config, "--param", "mu",
        "--values", values, "--out", out, "--threads", threads,
    ])
    if code == 0:
        print(Path(out, "sweep_summary.csv").read_text())
    raise SystemExit(code)
