"""Removing the external randomization from the rank martingales.

For tie-free data the randomized rank pair is uniform on a known rectangle,
so the increment can be replaced by its conditional expectation. With ties
this is no longer possible and several randomized paths are run instead; their
anytime p-values are merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInput, InvalidRectangle
from .grid import GridState
from .ranks import RankRectangle


def _interval_overlaps(lo: float, hi: float, d: int) -> np.ndarray:
    edges = np.arange(d + 1) / d
    ov = np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1])
    return np.clip(ov, 0.0, None) / (hi - lo)


def bin_probabilities(rect: RankRectangle, d: int) -> np.ndarray:
    """Share of the rectangle's area falling in each of the ``d x d`` cells."""
    ok = (0.0 <= rect.x_lo < rect.x_hi <= 1.0) and (0.0 <= rect.y_lo < rect.y_hi <= 1.0)
    if not ok:
        raise InvalidRectangle(f"degenerate or out-of-range rectangle {rect}")
    return np.outer(_interval_overlaps(rect.x_lo, rect.x_hi, d),
                    _interval_overlaps(rect.y_lo, rect.y_hi, d))


def derandomized_increment(grid: GridState, probs: np.ndarray) -> float:
    """Expected log-increment update of a grid holding expected counts.

    Returns ``log sum_cells probs * density`` where density is the
    (optionally Sinkhorn-corrected) predictive density, then adds ``probs`` to
    the expected counts.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (grid.d, grid.d):
        raise InvalidInput(f"expected a {grid.d}x{grid.d} probability matrix")
    return grid.update_expected(probs)


@dataclass(frozen=True)
class MergedPValue:
    method: str
    B: int
    value: float

    @property
    def reported(self) -> float:
        return min(1.0, self.value)


def merge_pvalues(per_seed_running_max: Sequence[float],
                  method: str = "arithmetic") -> MergedPValue:
    """Merge the anytime p-values ``1/max_n M_n(b)`` of ``B`` randomized paths.

    ``arithmetic`` gives twice the mean; ``geometric`` gives ``e`` times the
    geometric mean.
    """
    maxima = np.asarray(per_seed_running_max, dtype=float)
    if maxima.ndim != 1 or maxima.size == 0:
        raise InvalidInput("need at least one running maximum")
    if np.any(maxima < 1.0) or not np.all(np.isfinite(maxima)):
        raise InvalidInput("running maxima must be finite and >= 1")
    B = maxima.size
    if method == "arithmetic":
        value = 2.0 * float(np.mean(1.0 / maxima))
    elif method == "geometric":
        value = math.e * math.exp(-float(np.mean(np.log(maxima))))
    else:
        raise InvalidInput(f"unknown merge method {method!r}")
    return MergedPValue(method, B, value)


def merge_log_maxima(log_maxima: Sequence[float], method: str = "arithmetic") -> float:
    """Merged p-value (unclamped) from natural-log running maxima."""
    lm = np.asarray(log_maxima, dtype=float)
    if method == "arithmetic":
        return 2.0 * float(np.mean(np.exp(-lm)))
    if method == "geometric":
        return math.e * math.exp(-float(np.mean(lm)))
    raise InvalidInput(f"unknown merge method {method!r}")
