"""Sequential binary-expansion test.

Each cross-interaction splits the ``2^k x 2^k`` grid into two halves by the
sign of a product of dyadic Rademacher functions of the two ranks. Every split
gets a two-bin histogram martingale, and the test averages them with equal
weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from . import _kernels
from .errors import InvalidDepth, InvalidRank


@dataclass(frozen=True)
class InteractionRegion:
    """Digits ``a`` of the first rank and ``b`` of the second (1 = leading)."""

    k: int
    a: frozenset
    b: frozenset

    @property
    def d(self) -> int:
        return 2 ** self.k

    def cell_sign(self, kx: int, ky: int) -> int:
        sx = sum((kx >> (self.k - i)) & 1 for i in self.a)
        sy = sum((ky >> (self.k - j)) & 1 for j in self.b)
        return 1 if (sx + sy) % 2 == 0 else -1

    def sign(self, r: float, s: float) -> int:
        d = self.d
        return self.cell_sign(_kernels.cell_of_real(r, d), _kernels.cell_of_real(s, d))

    def mask(self) -> np.ndarray:
        """Indicator of the ``+1`` half on the ``d x d`` cells."""
        d = self.d
        return np.array([[self.cell_sign(kx, ky) == 1 for ky in range(d)]
                         for kx in range(d)], dtype=float)


def _subsets(k):
    for bits in range(1, 2 ** k):
        yield frozenset(i + 1 for i in range(k) if bits >> i & 1)


def interaction_regions(k: int) -> list[InteractionRegion]:
    """All ``(2^k - 1)^2`` cross-interactions at depth ``2^k``."""
    if int(k) != k or k < 1:
        raise InvalidDepth(f"binary depth must be a positive integer, got {k!r}")
    k = int(k)
    return [InteractionRegion(k, a, b) for a, b in product(_subsets(k), _subsets(k))]


@lru_cache(maxsize=None)
def interaction_masks(k: int) -> np.ndarray:
    masks = np.stack([reg.mask() for reg in interaction_regions(k)])
    masks.setflags(write=False)
    return masks


@dataclass
class BetState:
    """Two-bin martingales for every cross-interaction at depth ``2^k``."""

    k: int
    c0: float = 1.0
    n_act: int | None = None
    h1: np.ndarray = field(init=False)
    log_m_each: np.ndarray = field(init=False)
    n_seen: int = field(init=False, default=0)
    n_obs: int = field(init=False, default=0)
    buffer: list = field(init=False, default_factory=list)

    def __post_init__(self):
        self.masks = np.ascontiguousarray(interaction_masks(self.k))
        if self.n_act is None:
            self.n_act = self.d
        m = self.masks.shape[0]
        self.h1 = np.zeros(m)
        self.log_m_each = np.zeros(m)
        self._P = np.zeros((self.d, self.d))
        self._px = np.empty(self.d)
        self._py = np.empty(self.d)

    @property
    def d(self) -> int:
        return 2 ** self.k

    @property
    def log_m(self) -> float:
        """log of the equally weighted average over interactions."""
        return _kernels.log_mean_exp(self.log_m_each)

    def hold(self) -> float:
        self.n_obs += 1
        return 0.0

    def backfill(self, xs, ys) -> None:
        B = np.zeros((self.d, self.d))
        _kernels.backfill_counts(B, np.ascontiguousarray(xs, float),
                                 np.ascontiguousarray(ys, float))
        self.h1 += np.einsum("mkl,kl->m", self.masks, B)
        self.n_seen = len(xs)
        self.buffer = []

    def _step(self, P) -> float:
        before = self.log_m
        _kernels.bet_step(self.h1, self.n_seen, self.c0, self.log_m_each, self.masks, P)
        self.n_seen += 1
        return self.log_m - before

    def update(self, r: float, s: float) -> float:
        """Randomized update; returns the log increment of the average."""
        if not (0.0 <= r <= 1.0 and 0.0 <= s <= 1.0):
            raise InvalidRank(f"ranks must lie in [0, 1], got ({r!r}, {s!r})")
        if self.n_obs < self.n_act:
            self.n_obs += 1
            self.buffer.append((r, s))
            if self.n_obs == self.n_act:
                self.backfill([b[0] for b in self.buffer], [b[1] for b in self.buffer])
            return 0.0
        self.n_obs += 1
        P = self._P
        P[:, :] = 0.0
        P[_kernels.cell_of_real(r, self.d), _kernels.cell_of_real(s, self.d)] = 1.0
        return self._step(P)

    def update_expected(self, probs) -> float:
        self.n_obs += 1
        return self._step(np.ascontiguousarray(probs, dtype=float))

    def update_rect(self, count_x: int, count_y: int, n: int) -> float:
        d = self.d
        _kernels.interval_probs(count_x, n, d, self._px)
        _kernels.interval_probs(count_y, n, d, self._py)
        np.outer(self._px, self._py, out=self._P)
        self.n_obs += 1
        return self._step(self._P)
