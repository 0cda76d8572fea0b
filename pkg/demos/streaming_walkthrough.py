"""Watch one stream evidence build up, pause it, and pick it up again.

    python demos/streaming_walkthrough.py
"""

import numpy as np

from seqrank import Session, SessionConfig

rng = np.random.default_rng(3)
x = rng.normal(size=2000)
y = 0.25 * x + rng.normal(size=2000)  # weak linear dependence

cfg = SessionConfig(alpha=0.05)
s = Session(cfg)
print(f"rejecting once the aggregate reaches {s.threshold:g}")

for a, b in zip(x[:100], y[:100]):
    rep = s.observe(a, b)
print(f"n={rep.n:4d}  log10 M={rep.log10_m:+.3f}  p={rep.p_value:.3f}")

# the snapshot is plain JSON; a fresh process could resume from it
blob = s.snapshot()
print(f"snapshot after 100 pairs: {len(blob)} bytes")
s = Session.restore(blob)

for a, b in zip(x[100:], y[100:]):
    rep = s.observe(a, b)
    if rep.n % 100 == 0 or s.stopped:
        depths = " ".join(f"{v:+.2f}" for v in rep.log10_depths)
        print(f"n={rep.n:4d}  log10 M={rep.log10_m:+.3f}  per depth [{depths}]  "
              f"p={rep.p_value:.4f}  {rep.decision}")
    if s.stopped:
        break

# discrete data: ties need randomized paths
counts = rng.poisson(3, size=(2, 400))
counts[1] += counts[0] // 2
tied = Session(SessionConfig(tie_policy="randomized_paths", n_paths=10, seed=1))
last = tied.observe_many(counts[0], counts[1])[-1]
print(f"\ndiscrete stream: n={last.n}, merged p={last.p_value:.4f}, {last.decision}")
