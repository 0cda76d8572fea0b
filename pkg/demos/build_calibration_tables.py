"""Regenerate the calibration tables shipped with the package.

One run of 20,000 null paths to N = 4096 serves every level and horizon,
so the thresholds are nondecreasing in N by construction.

    python demos/build_calibration_tables.py [reps] [threads]
"""

import sys
import time
from pathlib import Path

from seqrank import SessionConfig
from seqrank.calibration import calibrate_alphas, save_tables

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
threads = int(sys.argv[2]) if len(sys.argv) > 2 else 1
horizons = [128, 256, 512, 1024, 2048, 4096]
out = Path(__file__).resolve().parents[1] / "src" / "seqrank" / "data" / "default.json"

tables = []
for cfg in (SessionConfig(), SessionConfig(method="seqbet")):
    t0 = time.time()
    tables += calibrate_alphas(cfg, [0.01, 0.05, 0.1], horizons, reps, seed=2024,
                               threads=threads)
    print(f"{cfg.method}: {time.time() - t0:.0f}s")
    for t in tables[-3:]:
        print(f"  alpha={t.alpha}: " + ", ".join(f"N={e.N}: {e.L:.2f}" for e in t.entries))

save_tables(tables, out)
print("wrote", out)
