"""Iterative proportional fitting onto uniform row and column margins."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidMatrix

MAX_ITER = 20
TOL_FACTOR = 1.001


def project_uniform_margins(c, max_iter: int = MAX_ITER,
                            tol_factor: float = TOL_FACTOR) -> np.ndarray:
    """Alternately rescale rows and columns of ``c`` to sum to ``1/d``.

    Stops as soon as every row and column sum lies in
    ``(1/(tol_factor*d), tol_factor/d)``, or after ``max_iter`` sweeps. The
    result is renormalized to total mass one.

    Args:
        c: square matrix with strictly positive entries.
        max_iter: cap on full row+column sweeps.
        tol_factor: multiplicative tolerance on the margins; pass ``1.0`` to
            run all ``max_iter`` sweeps.

    Returns:
        A new ``d x d`` array.
    """
    c = np.array(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] == 0:
        raise InvalidMatrix(f"expected a non-empty square matrix, got {c.shape}")
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise InvalidMatrix("all entries must be finite and strictly positive")
    c = c / c.sum()
    d = c.shape[0]
    out = np.empty_like(c)
    _kernels.sinkhorn_scaled(c, np.ones(d), np.ones(d), out, int(max_iter),
                             float(tol_factor))
    return out


def corrected_density(c_proj: np.ndarray, cell, d: int) -> float:
    k, l = cell
    return float(d * d * c_proj[k, l])


def margins_within(c: np.ndarray, tol_factor: float = TOL_FACTOR) -> bool:
    d = c.shape[0]
    return bool(_kernels.margins_within(np.asarray(c, dtype=float),
                                        1.0 / (d * tol_factor), tol_factor / d))
