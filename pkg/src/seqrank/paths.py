"""Whole-stream runs of a configured test, for simulation and calibration."""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from ._rng import uniform_pairs
from .config import SessionConfig
from .errors import ConfigError, TiesPresent
from .seqbet import interaction_masks


def run_path(config: SessionConfig, x, y, stop_at: float = math.inf,
             rand_seed=None, stream: int = 0):
    """Run the aggregated test over arrays ``x``, ``y``.

    Args:
        config: single-path configuration (``randomized_paths`` is not
            supported here).
        x, y: observations.
        stop_at: threshold on the (non-log) aggregate; the run stops at the
            first step reaching it.
        rand_seed: seed for the randomization uniforms (randomized mode
            only); defaults to ``config.seed``.
        stream: randomization stream id.

    Returns:
        ``(stop, log_path)`` where ``stop`` is the rejecting step (0 if none)
        and ``log_path`` holds the natural-log aggregate up to the stop.
    """
    if config.n_engines != 1:
        raise ConfigError("whole-path runs need a single-path configuration")
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    N = x.size
    derand = not config.randomized
    if derand:
        uv = np.empty((0, 2))
    else:
        uv = uniform_pairs(config.seed if rand_seed is None else rand_seed, stream, 0, N)
    stop_log = math.log(stop_at) if math.isfinite(stop_at) else math.inf
    out = np.empty(N)
    act = np.asarray(config.resolved_activation, dtype=np.int64)
    if config.method == "grid":
        hit = _kernels.run_grid_path(
            x, y, uv, derand, np.asarray(config.depths, dtype=np.int64), act,
            config.resolved_weights, config.resolved_w0, float(config.eta),
            float(config.c0), bool(config.sinkhorn), int(config.max_iter),
            float(config.tol_factor), stop_log, out)
    else:
        d = 2 ** config.bet_k
        masks = np.ascontiguousarray(interaction_masks(config.bet_k))
        hit = _kernels.run_bet_path(x, y, uv, derand, d, int(act[0]), float(config.c0),
                                    masks, stop_log, out)
    if hit < 0:
        raise TiesPresent("tied observations in a derandomized run")
    return int(hit), out[: hit if hit > 0 else N]


def stopping_time(config: SessionConfig, x, y, stop_at: float, rand_seed=None,
                  stream: int = 0) -> int:
    """First step at which the configured test rejects at ``stop_at`` (0 if none).

    With ``tie_policy="randomized_paths"`` the ``n_paths`` randomized paths
    use streams ``0..B-1`` of ``rand_seed`` and the test rejects once the
    merged anytime p-value drops to ``1/stop_at``, as a :class:`Session` does.
    """
    if config.n_engines == 1:
        return run_path(config, x, y, stop_at, rand_seed, stream)[0]
    single = _single_path(config)
    seed = config.seed if rand_seed is None else rand_seed
    running = np.stack([
        np.maximum.accumulate(np.maximum(run_path(single, x, y, rand_seed=seed, stream=b)[1], 0.0))
        for b in range(config.n_paths)
    ])
    if running.shape[1] == 0:
        return 0
    if config.merge == "arithmetic":
        p = 2.0 * np.mean(np.exp(-running), axis=0)
    else:
        p = math.e * np.exp(-np.mean(running, axis=0))
    hits = np.flatnonzero(np.minimum(p, 1.0) <= 1.0 / stop_at)
    return int(hits[0]) + 1 if hits.size else 0


def _single_path(config: SessionConfig) -> SessionConfig:
    d = config.to_dict()
    d["tie_policy"] = "single_randomized"
    return SessionConfig.from_dict(d)
