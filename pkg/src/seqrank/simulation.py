"""Synthetic dependence scenarios and power / stopping-time experiments.

All scenarios draw noise ``eps ~ N(0, (l/40)^2)``:

=============  =====================  =============================================
name           X                      Y
=============  =====================  =============================================
checkerboard   W + eps                V1 + 4 eps' if W == 2 else V2 + 4 eps''
circular       cos(theta) + 2.5 eps   sin(theta) + 2.5 eps'
linear         U                      X + 6 eps
local          G1                     X + eps if G1, G2 in [0, 1] else G2
parabolic      U                      (X - 0.5)^2 + 1.5 eps
sine           U                      sin(4 pi X) + 8 eps
independent    U                      U' (null reference)
=============  =====================  =============================================

with ``U ~ U[0,1]``, ``theta ~ U[-pi, pi]``, ``W ~ U{1,2,3}``, ``V1 ~ U{2,4}``,
``V2 ~ U{1,3,5}`` and ``G1, G2 ~ N(0, 1/4)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SessionConfig
from .errors import InvalidInput, UnknownScenario
from .paths import stopping_time
from .session import resolve_threshold

SCENARIOS = ("checkerboard", "circular", "linear", "local", "parabolic", "sine",
             "independent")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    noise: int = 1
    n: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise UnknownScenario(f"unknown scenario {self.name!r}; choose from {SCENARIOS}")
        # l = 0 is the noise-free limit
        if int(self.noise) != self.noise or not 0 <= self.noise <= 10:
            raise InvalidInput(f"noise level must be an integer in 0..10, got {self.noise!r}")
        if self.n < 0:
            raise InvalidInput("n must be non-negative")

    @property
    def sigma(self) -> float:
        return self.noise / 40.0


def sample_scenario(name: str, noise: int, n: int, rng: np.random.Generator):
    """Draw ``n`` pairs of scenario ``name`` from ``rng``."""
    ScenarioSpec(name, noise, n)
    sd = noise / 40.0
    if name == "checkerboard":
        w = rng.integers(1, 4, n)
        v1 = rng.choice([2, 4], n)
        v2 = rng.choice([1, 3, 5], n)
        e = rng.normal(0.0, 1.0, (3, n)) * sd
        x = w + e[0]
        y = np.where(w == 2, v1 + 4 * e[1], v2 + 4 * e[2])
    elif name == "circular":
        theta = rng.uniform(-math.pi, math.pi, n)
        e = rng.normal(0.0, 1.0, (2, n)) * sd
        x = np.cos(theta) + 2.5 * e[0]
        y = np.sin(theta) + 2.5 * e[1]
    elif name == "linear":
        x = rng.random(n)
        y = x + 6 * sd * rng.normal(0.0, 1.0, n)
    elif name == "local":
        g = rng.normal(0.0, 0.5, (2, n))
        e = rng.normal(0.0, 1.0, n) * sd
        inside = (g[0] >= 0) & (g[0] <= 1) & (g[1] >= 0) & (g[1] <= 1)
        x = g[0]
        y = np.where(inside, x + e, g[1])
    elif name == "parabolic":
        x = rng.random(n)
        y = (x - 0.5) ** 2 + 1.5 * sd * rng.normal(0.0, 1.0, n)
    elif name == "sine":
        x = rng.random(n)
        y = np.sin(4 * math.pi * x) + 8 * sd * rng.normal(0.0, 1.0, n)
    else:
        x = rng.random(n)
        y = rng.random(n)
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def generate(spec: ScenarioSpec):
    """All ``spec.n`` pairs of one replication as two arrays."""
    return sample_scenario(spec.name, spec.noise, spec.n, np.random.default_rng(spec.seed))


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(rep)])


@dataclass
class ExperimentResult:
    scenario: str
    noise: int
    budget: int
    reps: int
    threshold: float
    stop_times: np.ndarray = field(repr=False)

    @property
    def rejected(self) -> np.ndarray:
        return self.stop_times > 0

    @property
    def rejection_rate(self) -> float:
        return float(np.mean(self.rejected)) if self.reps else 0.0

    @property
    def mean_stop_rejecting(self) -> float:
        t = self.stop_times[self.rejected]
        return float(np.mean(t)) if t.size else math.nan

    @property
    def median_stop_rejecting(self) -> float:
        t = self.stop_times[self.rejected]
        return float(np.median(t)) if t.size else math.nan

    @property
    def mean_stop_imputed(self) -> float:
        """Mean stopping time with the budget standing in for non-rejections."""
        t = np.where(self.rejected, self.stop_times, self.budget)
        return float(np.mean(t)) if t.size else math.nan

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "noise": self.noise,
            "budget": self.budget,
            "reps": self.reps,
            "threshold": self.threshold,
            "rejection_rate": self.rejection_rate,
            "mean_stop_rejecting": _nan_to_none(self.mean_stop_rejecting),
            "median_stop_rejecting": _nan_to_none(self.median_stop_rejecting),
            "mean_stop_imputed": _nan_to_none(self.mean_stop_imputed),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rep", "rejected", "stop_time"])
        for i, t in enumerate(self.stop_times):
            w.writerow([i, int(t > 0), int(t) if t > 0 else ""])
        return buf.getvalue()

    def rejection_curve(self, horizons) -> list[tuple[int, float]]:
        """Fraction of replications rejected by each horizon."""
        st = self.stop_times
        return [(int(h), float(np.mean((st > 0) & (st <= h)))) for h in horizons]


def _nan_to_none(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def _map(fn, items, threads):
    if threads is None or threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_experiment(spec: ScenarioSpec, config: SessionConfig, reps: int,
                   budget: int, threshold: float | None = None,
                   threads: int | None = None) -> ExperimentResult:
    """Truncated sequential test on ``reps`` independent replications.

    Replication ``i`` draws its data from ``default_rng([spec.seed, i])`` and
    its randomization (if any) from stream ``i`` of ``config.seed``, or, for
    several randomized paths, from streams ``0..B-1`` of ``(config.seed, i)``.
    """
    if reps < 0 or budget < 1:
        raise InvalidInput("reps must be >= 0 and budget >= 1")
    L = resolve_threshold(config) if threshold is None else float(threshold)

    def one(i):
        x, y = sample_scenario(spec.name, spec.noise, budget, replication_rng(spec.seed, i))
        if config.n_engines == 1:
            return stopping_time(config, x, y, L, stream=i)
        return stopping_time(config, x, y, L, rand_seed=(config.seed, i))

    stops = np.asarray(_map(one, range(reps), threads), dtype=np.int64)
    return ExperimentResult(spec.name, spec.noise, budget, reps, L, stops)


def kl_grid_estimate(r, s, d: int) -> float:
    """Plug-in KL divergence of the binned sample from the uniform grid law."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if int(d) != d or d < 1:
        raise InvalidInput("d must be a positive integer")
    if r.shape != s.shape or r.size < d * d:
        raise InvalidInput(f"need at least d^2 = {d * d} paired samples")
    k = np.clip(np.ceil(r * d).astype(np.int64) - 1, 0, d - 1)
    l = np.clip(np.ceil(s * d).astype(np.int64) - 1, 0, d - 1)
    q = np.bincount(k * d + l, minlength=d * d) / r.size
    q = q[q > 0]
    return float(np.sum(q * np.log(q * d * d)))


__all__ = ["SCENARIOS", "ScenarioSpec", "ExperimentResult", "generate",
           "sample_scenario", "run_experiment", "kl_grid_estimate"]
