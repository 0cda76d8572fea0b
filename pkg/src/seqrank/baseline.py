"""Pairwise betting test with a Kolmogorov-Smirnov style witness.

Observations are consumed in pairs ``(x1, y1), (x2, y2)``. Under
independence the pair is exchangeable with its Y-swapped version
``(x1, y2), (x2, y1)``, so for any witness ``g`` fixed before the pair
arrives, ``g(x1,y1) + g(x2,y2) - g(x1,y2) - g(x2,y1)`` has conditional
mean zero. With the lower-orthant witness ``g = 1{F(x) <= u, G(y) <= v}``
the payoff collapses to ``(a1 - a2)(b1 - b2)`` in ``{-1, 0, 1}``.

``F`` and ``G`` are the empirical CDFs of all earlier observations, so the
test is rank based and invariant to increasing transforms. The witness
``(u, v)`` ranges over a grid of spacing 0.025 and the bet ``lambda`` is
clipped to ``[-0.5, 0.5]``; both are refit after each pair from the payoffs
seen so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sortedcontainers import SortedList

from .errors import InvalidInput, InvalidObservation

GRID = np.round(np.arange(1, 40) * 0.025, 10)
LAMBDA_MAX = 0.5


def fit_bet(S1: np.ndarray, S2: np.ndarray, lam_max: float = LAMBDA_MAX):
    """Witness cell and bet maximizing the quadratic log-wealth proxy.

    For each cell ``lambda = clip(S1 / max(S2, 1))`` and the score is
    ``lambda * S1 - lambda^2 * S2 / 2``; ties go to the first cell in
    row-major order.
    """
    lam = np.clip(S1 / np.maximum(S2, 1.0), -lam_max, lam_max)
    score = lam * S1 - 0.5 * lam * lam * S2
    flat = int(np.argmax(score))
    i, j = divmod(flat, S1.shape[1])
    return (i, j), float(lam[i, j])


@dataclass
class PairState:
    lam_max: float = LAMBDA_MAX
    pending: tuple | None = None
    n_pairs: int = 0
    log_m: float = 0.0
    lam: float = 0.0
    witness: tuple = (19, 19)
    S1: np.ndarray = field(default_factory=lambda: np.zeros((GRID.size, GRID.size)))
    S2: np.ndarray = field(default_factory=lambda: np.zeros((GRID.size, GRID.size)))

    def __post_init__(self):
        if not 0.0 < self.lam_max < 1.0:
            raise InvalidInput("lam_max must lie in (0, 1)")
        self._xs = SortedList()
        self._ys = SortedList()

    @property
    def n(self) -> int:
        return len(self._xs) + (self.pending is not None)

    def _indicators(self, v, sorted_vals):
        m = len(sorted_vals)
        if m == 0:
            return None
        return (sorted_vals.bisect_right(v) / m <= GRID).astype(float)


def pair_payoffs(state: PairState, x1, y1, x2, y2):
    """Payoff on every witness cell, or ``None`` before any history exists."""
    a1 = state._indicators(x1, state._xs)
    if a1 is None:
        return None
    a2 = state._indicators(x2, state._xs)
    b1 = state._indicators(y1, state._ys)
    b2 = state._indicators(y2, state._ys)
    return np.outer(a1 - a2, b1 - b2)


def sr_observe(state: PairState, x: float, y: float) -> float | None:
    """Feed one observation; returns the log increment after every second one."""
    x = float(x)
    y = float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidObservation(f"observations must be finite, got ({x!r}, {y!r})")
    if state.pending is None:
        state.pending = (x, y)
        return None
    x1, y1 = state.pending
    state.pending = None
    P = pair_payoffs(state, x1, y1, x, y)
    inc = 0.0
    if P is not None:
        i, j = state.witness
        inc = math.log1p(state.lam * P[i, j])
        state.S1 += P
        state.S2 += P * P
        state.witness, state.lam = fit_bet(state.S1, state.S2, state.lam_max)
    for v, w in ((x1, y1), (x, y)):
        state._xs.add(v)
        state._ys.add(w)
    state.n_pairs += 1
    state.log_m += inc
    return inc


def run_sr(x, y, stop_at: float = math.inf, lam_max: float = LAMBDA_MAX):
    """Run the pairwise test over arrays.

    Returns ``(stop, log_path)``: the raw-observation count at rejection (0
    if none) and the log martingale after each completed pair. A trailing
    unpaired observation is ignored.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInput("x and y must be 1-d arrays of equal length")
    log_stop = math.log(stop_at) if math.isfinite(stop_at) else math.inf
    st = PairState(lam_max=lam_max)
    path = []
    for t in range(x.size - x.size % 2):
        if sr_observe(st, x[t], y[t]) is None:
            continue
        path.append(st.log_m)
        if st.log_m >= log_stop:
            return t + 1, np.array(path)
    return 0, np.array(path)


def run_sr_experiment(spec, reps: int, budget: int, threshold: float,
                      threads: int | None = None):
    """Pairwise test on the same replications :func:`run_experiment` uses."""
    from .simulation import ExperimentResult, _map, replication_rng, sample_scenario

    if reps < 0 or budget < 2:
        raise InvalidInput("reps must be >= 0 and budget >= 2")

    def one(i):
        x, y = sample_scenario(spec.name, spec.noise, budget, replication_rng(spec.seed, i))
        return run_sr(x, y, threshold)[0]

    stops = np.asarray(_map(one, range(reps), threads), dtype=np.int64)
    return ExperimentResult(spec.name, spec.noise, budget, reps, float(threshold), stops)
