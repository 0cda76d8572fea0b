"""Rejection rate against sample size for every scenario and a few noise levels.

Writes one CSV per scenario to ``power_curves/`` (n, noise, rate), the data
behind a power-vs-N plot. About ten minutes on one core at the defaults.

    python demos/power_curves.py [reps] [budget]
"""

import csv
import sys
from pathlib import Path

from seqrank import SessionConfig
from seqrank.simulation import ScenarioSpec, run_experiment

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
budget = int(sys.argv[2]) if len(sys.argv) > 2 else 512
out_dir = Path("power_curves")
out_dir.mkdir(exist_ok=True)
horizons = range(16, budget + 1, 16)
cfg = SessionConfig()

for name in ("linear", "parabolic", "sine", "circular", "checkerboard", "local"):
    path = out_dir / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "noise", "rejection_rate"])
        for noise in (1, 5, 9):
            res = run_experiment(ScenarioSpec(name, noise, seed=1), cfg, reps, budget,
                                 threshold=16.9)
            for n, rate in res.rejection_curve(horizons):
                w.writerow([n, noise, rate])
            print(f"{name:12s} l={noise}  power {res.rejection_rate:.2f}  "
                  f"mean stop {res.mean_stop_imputed:.0f}")
    print("  ->", path)
