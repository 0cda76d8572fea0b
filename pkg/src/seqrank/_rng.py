"""Counter-based uniforms: the pair for step ``n`` depends only on (seed, stream, n)."""

from __future__ import annotations

import numpy as np

BLOCK = 4096
_TINY = 2.0 ** -53


def _entropy(seed):
    if isinstance(seed, (tuple, list)):
        return [int(s) for s in seed]
    return [int(seed)]


def uniform_block(seed, stream: int, block: int) -> np.ndarray:
    """``BLOCK x 2`` uniforms on the open interval (0, 1)."""
    rng = np.random.default_rng(_entropy(seed) + [int(stream), int(block)])
    u = rng.random((BLOCK, 2))
    u[u == 0.0] = _TINY
    return u


def uniform_pairs(seed, stream: int, start: int, count: int) -> np.ndarray:
    """Uniform pairs for steps ``start, ..., start + count - 1`` (0-based)."""
    out = np.empty((count, 2))
    pos = 0
    while pos < count:
        step = start + pos
        b, off = divmod(step, BLOCK)
        take = min(BLOCK - off, count - pos)
        out[pos:pos + take] = uniform_block(seed, stream, b)[off:off + take]
        pos += take
    return out


class UniformStream:
    """Caches one block at a time for step-by-step consumers."""

    def __init__(self, seed, stream: int):
        self.seed = seed
        self.stream = stream
        self._block_id = -1
        self._block = None

    def pair(self, step: int) -> tuple[float, float]:
        b, off = divmod(step, BLOCK)
        if b != self._block_id:
            self._block = uniform_block(self.seed, self.stream, b)
            self._block_id = b
        return float(self._block[off, 0]), float(self._block[off, 1])
