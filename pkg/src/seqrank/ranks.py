"""Sequential ranks for one coordinate of a stream.

Ranks are kept as exact integer pairs ``(count, n)`` and only become floats
when randomized; long streams therefore never accumulate rounding drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from sortedcontainers import SortedList

from . import _kernels
from .errors import InvalidInput, InvalidObservation, InvalidRandomizer, TiesPresent


@dataclass(frozen=True)
class RankPair:
    """Empirical CDF at the newest observation, and just below it.

    ``count_le`` observations so far are <= the newest one, ``count_lt`` are
    strictly smaller, out of ``n`` in total.
    """

    count_le: int
    count_lt: int
    n: int

    @property
    def fhat(self) -> float:
        return self.count_le / self.n

    @property
    def fhat_minus(self) -> float:
        return self.count_lt / self.n

    @property
    def multiplicity(self) -> int:
        return self.count_le - self.count_lt

    @property
    def tied(self) -> bool:
        return self.count_le - self.count_lt > 1

    def as_fractions(self) -> tuple[Fraction, Fraction]:
        return Fraction(self.count_le, self.n), Fraction(self.count_lt, self.n)


@dataclass(frozen=True)
class RankRectangle:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    @property
    def area(self) -> float:
        return (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)


class RankState:
    """Order-statistic multiset with O(log n) insertion and rank queries."""

    def __init__(self, values: Iterable[float] = ()):
        self._values = SortedList(values)

    @property
    def n(self) -> int:
        return len(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def below(self, x: float) -> int:
        return self._values.bisect_left(x)

    def at(self, x: float) -> int:
        return self._values.bisect_right(x) - self._values.bisect_left(x)

    def above(self, x: float) -> int:
        return len(self._values) - self._values.bisect_right(x)

    def insert_and_rank(self, x: float) -> RankPair:
        x = float(x)
        if not math.isfinite(x):
            raise InvalidObservation(f"observation must be finite, got {x!r}")
        values = self._values
        values.add(x)
        return RankPair(values.bisect_right(x), values.bisect_left(x), len(values))

    def values(self) -> np.ndarray:
        """Sorted copy of the stored values."""
        return np.fromiter(self._values, dtype=float, count=len(self._values))


def randomize(pair: RankPair, u: float) -> float:
    """Randomized rank ``u * fhat + (1 - u) * fhat_minus``."""
    if not 0.0 < u < 1.0:
        raise InvalidRandomizer(f"randomizer must lie in (0, 1), got {u!r}")
    return _kernels.randomized_rank(pair.count_le, pair.count_lt, pair.n, u)


def rank_rectangle(px: RankPair, py: RankPair) -> RankRectangle:
    """Rectangle on which the randomized rank pair is uniform (tie-free data)."""
    if px.tied or py.tied:
        raise TiesPresent(
            "rank rectangle needs tie-free data; use randomized paths for ties"
        )
    n = px.n
    return RankRectangle((px.count_le - 1) / n, px.count_le / n,
                         (py.count_le - 1) / py.n, py.count_le / py.n)


def batch_rank_counts(values: Sequence[float]) -> np.ndarray:
    """``#{j: x_j <= x_i}`` for each i (ties all share the top count)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput("batch ranks need a non-empty 1-d sequence")
    srt = np.sort(arr)
    return np.searchsorted(srt, arr, side="right").astype(np.int64)


def batch_ranks(values: Sequence[float]) -> list[Fraction]:
    counts = batch_rank_counts(values)
    d = counts.size
    return [Fraction(int(c), d) for c in counts]


def sequential_rank_counts(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Sequential ``(count_le, count_lt)`` arrays for a whole stream.

    Fenwick tree over coordinate compression; same integers as feeding the
    stream one value at a time through :class:`RankState`.
    """
    arr = np.ascontiguousarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInput("expected a 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise InvalidObservation("observations must be finite")
    return _kernels.sequential_counts(arr)
