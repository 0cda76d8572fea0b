"""Histogram test martingale on a regular d x d grid of the unit square."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import InvalidCounts, InvalidDepth, InvalidRank
from .sinkhorn import MAX_ITER, TOL_FACTOR


class BinIndex(NamedTuple):
    k: int
    l: int


def _check_depth(d):
    if int(d) != d or d < 1:
        raise InvalidDepth(f"depth must be a positive integer, got {d!r}")


def bin_index(r: float, s: float, d: int) -> BinIndex:
    """Cell of ``(r, s)``; cells are left-open/right-closed, 0 joins cell 0."""
    _check_depth(d)
    if not (0.0 <= r <= 1.0 and 0.0 <= s <= 1.0):
        raise InvalidRank(f"ranks must lie in [0, 1], got ({r!r}, {s!r})")
    return BinIndex(_kernels.cell_of_real(r, d), _kernels.cell_of_real(s, d))


def closed_form_log_m(counts, N: int, d: int) -> float:
    """log of d^(2N) (d^2-1)! / (N-1+d^2)! * prod_cells b!  (initial count 1)."""
    counts = np.asarray(counts)
    if counts.size != d * d or int(round(counts.sum())) != N:
        raise InvalidCounts(f"counts must have {d * d} cells summing to {N}")
    if N == 0:
        return 0.0
    dd = d * d
    return float(2 * N * math.log(d) + gammaln(dd) - gammaln(N + dd)
                 + gammaln(counts.astype(float) + 1.0).sum())


@dataclass
class GridState:
    """Bin counts and running log-martingale for one grid depth.

    ``counts`` exclude the ``c0`` pseudo-counts, which are added when the
    density is evaluated. In randomized mode the counts are integers; the
    derandomized path adds expected (fractional) counts instead.

    The first ``n_act`` observations are only buffered (multiplicative
    increment 1); once ``n_act`` are in, they enter the counts at their
    non-sequential ranks among themselves.
    """

    d: int
    c0: float = 1.0
    n_act: int | None = None
    sinkhorn: bool = False
    max_iter: int = MAX_ITER
    tol_factor: float = TOL_FACTOR
    counts: np.ndarray = field(init=False)
    n_seen: int = field(init=False, default=0)
    n_obs: int = field(init=False, default=0)
    log_m: float = field(init=False, default=0.0)
    row_scale: np.ndarray = field(init=False)
    col_scale: np.ndarray = field(init=False)
    buffer: list = field(init=False, default_factory=list)

    def __post_init__(self):
        _check_depth(self.d)
        if self.n_act is None:
            self.n_act = self.d
        if self.n_act < 0:
            raise InvalidDepth("activation time must be non-negative")
        if not self.c0 > 0:
            raise InvalidCounts("initial count must be positive")
        d = self.d
        self.counts = np.zeros((d, d))
        self.row_scale = np.ones(d)
        self.col_scale = np.ones(d)
        self._work = np.empty((2, d, d))
        self._px = np.empty(d)
        self._py = np.empty(d)

    @property
    def active(self) -> bool:
        return self.n_obs >= self.n_act

    def density_at(self, cell) -> float:
        """Uncorrected histogram density on ``cell``."""
        k, l = cell
        d = self.d
        return d * d * (self.counts[k, l] + self.c0) / (self.n_seen + self.c0 * d * d)

    def cell_densities(self) -> np.ndarray:
        """Predictive density on every cell (Sinkhorn-corrected if enabled).

        With Sinkhorn on, this advances the warm-start scalings exactly as an
        update would, so it must not be interleaved with updates when bit-level
        reproducibility matters.
        """
        _kernels.cell_densities(self.counts, self.n_seen, self.c0, self.sinkhorn,
                                self.row_scale, self.col_scale, self._work,
                                self.max_iter, self.tol_factor)
        return self._work[1].copy()

    def _buffer_or_none(self, item):
        # returns True when the observation was consumed by the warm-up buffer
        if self.n_obs < self.n_act:
            self.n_obs += 1
            self.buffer.append(item)
            if self.n_obs == self.n_act:
                xs = np.array([b[0] for b in self.buffer], dtype=float)
                ys = np.array([b[1] for b in self.buffer], dtype=float)
                self.backfill(xs, ys)
            return True
        self.n_obs += 1
        return False

    def hold(self) -> float:
        """Count a warm-up observation whose raw values the caller keeps."""
        self.n_obs += 1
        return 0.0

    def backfill(self, xs: np.ndarray, ys: np.ndarray) -> None:
        _kernels.backfill_counts(self.counts, np.ascontiguousarray(xs, float),
                                 np.ascontiguousarray(ys, float))
        self.n_seen = len(xs)
        self.buffer = []

    def update(self, r: float, s: float) -> float:
        """Feed one randomized rank pair; return the log increment."""
        if not (0.0 <= r <= 1.0 and 0.0 <= s <= 1.0):
            raise InvalidRank(f"ranks must lie in [0, 1], got ({r!r}, {s!r})")
        if self._buffer_or_none((r, s)):
            return 0.0
        d = self.d
        inc = _kernels.step_point(self.counts, self.n_seen, self.c0, self.sinkhorn,
                                  self.row_scale, self.col_scale, self._work,
                                  self.max_iter, self.tol_factor,
                                  _kernels.cell_of_real(r, d), _kernels.cell_of_real(s, d))
        self.n_seen += 1
        self.log_m += inc
        return inc

    def update_expected(self, probs: np.ndarray) -> float:
        """Feed cell probabilities of the next pair (derandomized update)."""
        inc = _kernels.step_probs(self.counts, self.n_seen, self.c0, self.sinkhorn,
                                  self.row_scale, self.col_scale, self._work,
                                  self.max_iter, self.tol_factor,
                                  np.ascontiguousarray(probs, dtype=float))
        self.n_seen += 1
        self.n_obs += 1
        self.log_m += inc
        return inc

    def update_rect(self, count_x: int, count_y: int, n: int) -> float:
        """Derandomized update for the tie-free rank rectangle at time ``n``.

        Equivalent to ``update_expected(bin_probabilities(rect, d))`` with
        exact integer overlap arithmetic. Callers handle the warm-up buffer.
        """
        inc = _kernels.step_rect(self.counts, self.n_seen, self.c0, self.sinkhorn,
                                 self.row_scale, self.col_scale, self._work,
                                 self.max_iter, self.tol_factor,
                                 count_x, count_y, n, self._px, self._py)
        self.n_seen += 1
        self.n_obs += 1
        self.log_m += inc
        return inc
