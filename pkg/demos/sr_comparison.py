"""Pairwise betting baseline against the rank test on shared replications.

    python demos/sr_comparison.py [reps]
"""

import sys

from seqrank import SessionConfig
from seqrank.baseline import run_sr_experiment
from seqrank.simulation import ScenarioSpec, run_experiment

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
cfg = SessionConfig()

print(f"{'scenario':12s} {'l':>2s}  {'rank test':>16s}  {'pairwise SR':>16s}")
for name, noise in [("linear", 5), ("parabolic", 3), ("sine", 3), ("circular", 3),
                    ("local", 5)]:
    spec = ScenarioSpec(name, noise, seed=2)
    ours = run_experiment(spec, cfg, reps, 512, threshold=16.9)
    sr = run_sr_experiment(spec, reps, 512, 16.9)
    print(f"{name:12s} {noise:2d}  "
          f"{ours.rejection_rate:5.2f} @ {ours.mean_stop_imputed:5.0f}    "
          f"{sr.rejection_rate:5.2f} @ {sr.mean_stop_imputed:5.0f}")
