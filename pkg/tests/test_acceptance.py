"""Acceptance suite.

Each test checks one acceptance criterion at its stated tolerance and prints
a single ``criterion N: PASS|FAIL`` line; the lines are repeated in the
pytest terminal summary. Run just this module with

    pytest tests/test_acceptance.py -v -s

or standalone with ``python3 tests/test_acceptance.py``. Set
``SEQRANK_SLOW=1`` to add the 100k-replication check at N = 4096.
"""

import copy
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import closed_form, ipf, naive_sequential_counts_np, two_by_two_fixed_point
from seqrank import Session, SessionConfig
from seqrank.calibration import calibrate, running_log_maxima
from seqrank.derandomize import bin_probabilities, derandomized_increment
from seqrank.grid import GridState
from seqrank.paths import run_path
from seqrank.ranks import RankRectangle, RankState, sequential_rank_counts
from seqrank.simulation import ScenarioSpec, kl_grid_estimate, run_experiment
from seqrank.sinkhorn import margins_within, project_uniform_margins

RESULTS = []


def report(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _null(seed, i, n):
    u = np.random.default_rng([seed, i]).random((2, n))
    return u[0], u[1]


# 1 -------------------------------------------------------------------------


def test_criterion_1_closed_form_oracle():
    t0 = time.time()
    worst = 0.0
    for i in range(1000):
        r, s = np.random.default_rng([101, i]).random((2, 500))
        for d in (2, 4, 8, 16):
            g = GridState(d, n_act=0)
            for a, b in zip(r, s):
                g.update(a, b)
            worst = max(worst, abs(g.log_m - closed_form(g.counts, d)))
    took = time.time() - t0
    report(1, worst < 1e-9 and took < 60, f"max |diff| = {worst:.2e}, {took:.0f}s")


# 2 -------------------------------------------------------------------------


def test_criterion_2_rank_oracle():
    t0 = time.time()
    bad = 0
    for i in range(100):
        rng = np.random.default_rng([102, i])
        x = rng.integers(0, 500, 10_000).astype(float) if i % 2 else rng.normal(size=10_000)
        ref = naive_sequential_counts_np(x)
        st = RankState()
        pairs = [st.insert_and_rank(v) for v in x.tolist()]
        le, lt = sequential_rank_counts(x)
        ok = (np.array_equal([p.count_le for p in pairs], ref[0])
              and np.array_equal([p.count_lt for p in pairs], ref[1])
              and np.array_equal(le, ref[0]) and np.array_equal(lt, ref[1]))
        bad += not ok
    took = time.time() - t0
    report(2, bad == 0 and took < 60, f"{100 - bad}/100 streams exact, {took:.0f}s")


# 3 -------------------------------------------------------------------------


def _crossing_rate(cfg, reps, N, level, seed):
    hits = 0
    for i in range(reps):
        x, y = _null(seed, i, N)
        hits += run_path(cfg, x, y, stop_at=level, stream=i)[0] > 0
    return hits / reps


def test_criterion_3_type_one_error():
    reps = 10_000
    rate = _crossing_rate(SessionConfig(), reps, 1000, 20.0, seed=103)
    bound = 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)
    report(3, rate <= bound, f"null crossing rate {rate:.4f} <= {bound:.4f}")


# 4 -------------------------------------------------------------------------


def test_criterion_4_ville_gap_calibration():
    cfg = SessionConfig()
    target = {128: 9.17, 256: 13.8, 512: 16.9}
    table = calibrate(cfg, 0.05, list(target), reps=20_000, seed=104)
    Ls = {N: table.threshold(N) for N in target}
    ok = all(abs(Ls[N] / v - 1) <= 0.10 for N, v in target.items())
    held = np.exp(running_log_maxima(cfg, [512], 10_000, seed=1104)[:, 0])
    rate = float(np.mean(held >= Ls[512]))
    ok_rate = abs(rate - 0.047) <= 0.015
    detail = ", ".join(f"L_{N}={Ls[N]:.2f} ({Ls[N] / v - 1:+.1%})" for N, v in target.items())
    detail += f"; held-out null rate at L_512 = {rate:.4f}"
    if os.environ.get("SEQRANK_SLOW"):
        big = calibrate(cfg, 0.05, [4096], reps=100_000, seed=204)
        L4096 = big.threshold(4096)
        ok = ok and abs(L4096 / 18.3 - 1) <= 0.10
        detail += f"; L_4096={L4096:.2f} ({L4096 / 18.3 - 1:+.1%})"
    report(4, ok and ok_rate, detail)


# 5 -------------------------------------------------------------------------


def test_criterion_5_power_and_stopping():
    cfg = SessionConfig()
    runs = {}
    for name, noise in [("circular", 1), ("linear", 5), ("local", 9), ("sine", 9)]:
        runs[name] = run_experiment(ScenarioSpec(name, noise, seed=105), cfg, reps=1000,
                                    budget=512, threshold=16.9)
    c, l, lo, s = runs["circular"], runs["linear"], runs["local"], runs["sine"]
    checks = [
        c.rejection_rate >= 0.99, abs(c.mean_stop_imputed - 45) <= 15,
        l.rejection_rate >= 0.98, abs(l.mean_stop_imputed - 135) <= 25,
        abs(lo.rejection_rate - 0.83) <= 0.06,
        abs(s.rejection_rate - 0.96) <= 0.04,
    ]
    detail = (f"circular l=1 power {c.rejection_rate:.3f} stop {c.mean_stop_imputed:.1f}; "
              f"linear l=5 power {l.rejection_rate:.3f} stop {l.mean_stop_imputed:.1f}; "
              f"local l=9 power {lo.rejection_rate:.3f}; sine l=9 power {s.rejection_rate:.3f}")
    report(5, all(checks), detail)


# 6 -------------------------------------------------------------------------


def test_criterion_6_kl_properties():
    from scipy.stats import norm

    reps, n = 20, 200_000
    est = np.empty((reps, 3))
    for i in range(reps):
        z = np.random.default_rng([106, i]).normal(size=(2, n))
        a = norm.cdf(z[0])
        b = norm.cdf(0.5 * z[0] + math.sqrt(0.75) * z[1])
        est[i] = [kl_grid_estimate(a, b, d) for d in (2, 4, 8)]
    diffs = np.diff(est, axis=1)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(reps)
    nested = bool(np.all(diffs.mean(axis=0) >= -3 * se))
    u = np.random.default_rng(206).random(1_000_000)
    como = [abs(kl_grid_estimate(u, u, d) - math.log(d)) for d in (2, 4, 8, 16)]
    ok = nested and max(como) < 1e-3
    m = est.mean(axis=0)
    report(6, ok, f"KL d=2,4,8: {m[0]:.4f} <= {m[1]:.4f} <= {m[2]:.4f}; "
                  f"comonotone max |KL - log d| = {max(como):.1e}")


# 7 -------------------------------------------------------------------------


def test_criterion_7_derandomization():
    rng = np.random.default_rng(107)
    worst = 0.0
    for rep in range(100):
        d = [2, 4, 8, 16][rep % 4]
        g = GridState(d, n_act=0, sinkhorn=bool(rep % 2))
        m = int(rng.integers(5, 80))
        for a, b in rng.random((m, 2)):
            g.update(a, a * b)
        n = m + 1
        cx, cy = rng.integers(1, n + 1, 2)
        rect = RankRectangle((cx - 1) / n, cx / n, (cy - 1) / n, cy / n)
        r = rect.x_lo + (rect.x_hi - rect.x_lo) * rng.random(100_000)
        s = rect.y_lo + (rect.y_hi - rect.y_lo) * rng.random(100_000)
        kx = np.clip(np.ceil(r * d).astype(int) - 1, 0, d - 1)
        ky = np.clip(np.ceil(s * d).astype(int) - 1, 0, d - 1)
        mc = g.cell_densities()[kx, ky].mean()
        probe = copy.deepcopy(g)
        inc = derandomized_increment(probe, bin_probabilities(rect, d))
        worst = max(worst, abs(math.exp(inc) / mc - 1))

    reps = 5000
    p_d = _crossing_rate(SessionConfig(), reps, 500, 20.0, seed=207)
    p_r = _crossing_rate(SessionConfig(derandomize=False, seed=7), reps, 500, 20.0, seed=307)
    se = math.sqrt(p_d * (1 - p_d) / reps + p_r * (1 - p_r) / reps)
    same = abs(p_d - p_r) <= 3 * max(se, 1e-12)
    report(7, worst < 0.01 and same,
           f"max rel err vs MC {worst:.4f}; null crossing derandomized {p_d:.4f} "
           f"vs randomized {p_r:.4f} (3 SE = {3 * se:.4f})")


# 8 -------------------------------------------------------------------------


def test_criterion_8_sinkhorn():
    rng = np.random.default_rng(108)
    missed = []
    for _ in range(1000):
        d = int(rng.integers(2, 17))
        c = rng.random((d, d))
        if not margins_within(project_uniform_margins(c, max_iter=20)):
            missed.append((d, float(c.min())))
    counts_ok = 0
    for _ in range(1000):
        d = int(rng.choice([2, 4, 8, 16]))
        p = rng.dirichlet(np.full(d * d, 2.0))
        c = rng.multinomial(int(rng.integers(0, 3000)), p).reshape(d, d) + 1.0
        counts_ok += margins_within(project_uniform_margins(c / c.sum()))
    worst_or = 0.0
    for _ in range(50):
        c = rng.random((3, 3)) + 0.05
        out = project_uniform_margins(c, max_iter=100_000, tol_factor=1 + 1e-13)
        for k, l, k2, l2 in [(0, 0, 1, 1), (0, 1, 2, 2), (1, 0, 2, 1)]:
            before = c[k, l] * c[k2, l2] / (c[k, l2] * c[k2, l])
            after = out[k, l] * out[k2, l2] / (out[k, l2] * out[k2, l])
            worst_or = max(worst_or, abs(after / before - 1))
        worst_or = max(worst_or, float(np.max(np.abs(out - ipf(c)))))
    c22 = [[0.4, 0.1], [0.2, 0.3]]
    err22 = float(np.max(np.abs(project_uniform_margins(c22, max_iter=10_000,
                                                        tol_factor=1 + 1e-13)
                                - two_by_two_fixed_point(c22))))
    ok = not missed and worst_or < 1e-6 and err22 < 1e-6
    detail = (f"U(0,1) matrices in band after <= 20 sweeps: {1000 - len(missed)}/1000"
              + (f" (misses: d={sorted({m[0] for m in missed})}, min entry <= "
                 f"{max(m[1] for m in missed):.4f})" if missed else "")
              + f"; pseudo-count matrices {counts_ok}/1000; odds ratios {worst_or:.1e}; "
              f"2x2 fixed point {err22:.1e}")
    report(8, ok, detail)


# 9 -------------------------------------------------------------------------


def test_criterion_9_invariance_and_determinism():
    configs = [
        SessionConfig(threshold=1e300),
        SessionConfig(threshold=1e300, eta=1.0),
        SessionConfig(threshold=1e300, derandomize=False, seed=9),
        SessionConfig(threshold=1e300, method="seqbet"),
        SessionConfig(threshold=1e300, tie_policy="randomized_paths", n_paths=4, seed=3),
    ]
    ok = True
    for j, cfg in enumerate(configs):
        rng = np.random.default_rng([109, j])
        x = rng.normal(size=800)
        y = 0.2 * x + rng.standard_t(2, size=800)
        base = Session(cfg)
        a = [base.observe(p, q) for p, q in zip(x, y)]
        moved = Session(cfg)
        b = [moved.observe(p, q) for p, q in zip(np.arctan(x) * 3 + 1, np.exp(y / 4))]
        split = Session(cfg)
        c = [split.observe(p, q) for p, q in zip(x[:333], y[:333])]
        resumed = Session.restore(split.snapshot())
        c += [resumed.observe(p, q) for p, q in zip(x[333:], y[333:])]
        ok = ok and a == b == c
    report(9, ok, f"{len(configs)} configurations bit-identical under transforms and restore")


# 10 ------------------------------------------------------------------------


def test_criterion_10_performance(tmp_path):
    u = np.random.default_rng(110).random((1_000_000, 2))
    src = tmp_path / "big.csv"
    src.write_text("x,y\n" + "\n".join(f"{a!r},{b!r}" for a, b in u.tolist()) + "\n")
    out = tmp_path / "out.csv"
    t0 = time.time()
    res = subprocess.run([sys.executable, "-m", "seqrank", "test", "--input", str(src),
                          "--output", str(out)], capture_output=True, text=True)
    took = time.time() - t0
    with open(out, "rb") as fh:
        fh.seek(-200, 2)
        last = fh.read().decode().splitlines()[-1]
    complete = res.returncode == 0 and last.startswith("1000000,")

    def rank_time(n):
        vals = np.random.default_rng(210).random(n).tolist()
        st = RankState()
        t = time.perf_counter()
        for v in vals:
            st.insert_and_rank(v)
        return time.perf_counter() - t

    t1, t2 = rank_time(250_000), rank_time(500_000)
    ok = complete and took < 120 and t2 / t1 < 3
    report(10, ok, f"10^6 observations in {took:.0f}s (rc={res.returncode}); "
                   f"rank time ratio for doubled stream {t2 / t1:.2f}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
