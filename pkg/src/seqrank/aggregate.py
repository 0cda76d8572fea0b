"""Combining per-depth predictive densities into one test martingale.

The mixing weight of depth ``d`` at time ``n`` is proportional to
``w_d * M_{n-1}(d) ** eta``. ``eta = 0`` mixes the densities with fixed
weights (optionally shrunk towards 1 by ``w0``); ``eta = 1`` reproduces the
weighted average of the per-depth martingales.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, InvalidInput

DEFAULT_DEPTHS = (2, 4, 8, 16)


@dataclass
class AggregatorState:
    depths: tuple
    weights: np.ndarray
    w0: float = 0.0
    eta: float = 0.0
    log_m_depths: np.ndarray = field(init=False)
    log_m: float = field(init=False, default=0.0)

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        self.weights = np.asarray(self.weights, dtype=float)
        validate_weights(self.depths, self.weights, self.w0, self.eta)
        self.log_m_depths = np.zeros(len(self.depths))

    def step(self, log_densities: Sequence[float],
             log_m_prev: Sequence[float] | None = None) -> float:
        """Advance by one observation.

        Args:
            log_densities: log predictive density of each depth at the new
                pair (0 for depths still warming up).
            log_m_prev: per-depth log-martingales before this step; defaults
                to the internal ledger.

        Returns:
            The log increment of the aggregate.
        """
        log_f = np.asarray(log_densities, dtype=float)
        if log_f.shape != (len(self.depths),):
            raise InvalidInput(f"expected {len(self.depths)} log densities")
        if log_m_prev is None:
            prev = self.log_m_depths
        else:
            prev = np.asarray(log_m_prev, dtype=float)
            if prev.shape != log_f.shape:
                raise InvalidInput("log_m_prev must align with the depths")
        inc = _kernels.aggregate_log_increment(log_f, prev, self.weights,
                                               float(self.w0), float(self.eta))
        self.log_m_depths = prev + log_f
        self.log_m += inc
        return inc


def validate_weights(depths, weights, w0, eta):
    if len(depths) == 0:
        raise ConfigError("need at least one depth")
    if len(set(depths)) != len(depths) or min(depths) < 1:
        raise ConfigError(f"depths must be distinct positive integers: {depths}")
    if len(weights) != len(depths):
        raise ConfigError("one weight per depth required")
    if np.any(np.asarray(weights) <= 0):
        raise ConfigError("depth weights must be positive")
    if abs(float(np.sum(weights)) - 1.0) > 1e-9:
        raise ConfigError(f"depth weights must sum to 1, got {np.sum(weights)}")
    if not 0.0 <= w0 < 1.0:
        raise ConfigError(f"w0 must lie in [0, 1), got {w0}")
    if eta < 0:
        raise ConfigError("eta must be non-negative")


def default_config(eta: float = 0.0) -> AggregatorState:
    """Depths 2, 4, 8, 16 with equal weights; ``w0 = 0.2`` when ``eta == 0``.

    With ``eta == 0`` every depth and the constant part then carry weight 0.2.
    """
    w0 = 0.2 if eta == 0 else 0.0
    return AggregatorState(DEFAULT_DEPTHS, np.full(4, 0.25), w0=w0, eta=eta)
