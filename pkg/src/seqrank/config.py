"""Session configuration."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .aggregate import DEFAULT_DEPTHS, validate_weights
from .errors import ConfigError
from .sinkhorn import MAX_ITER, TOL_FACTOR

TIE_POLICIES = ("error", "randomized_paths", "single_randomized")
METHODS = ("grid", "seqbet")
MERGES = ("arithmetic", "geometric")


@dataclass(frozen=True)
class SessionConfig:
    """Everything that determines a test's output besides the data.

    ``threshold`` is ``"ville"`` (reject at ``1/alpha``), a number ``L >= 1``,
    or ``"calibrated:N"`` to look up the Monte Carlo threshold for horizon
    ``N`` in a calibration table (see :mod:`seqrank.calibration`).

    ``tie_policy``: ``"error"`` runs the derandomized test (if
    ``derandomize``) and refuses tied observations; ``"randomized_paths"``
    runs ``n_paths`` independently randomized tests and merges their anytime
    p-values; ``"single_randomized"`` runs one randomized test.
    """

    alpha: float = 0.05
    depths: tuple = DEFAULT_DEPTHS
    weights: tuple | None = None
    eta: float = 0.0
    w0: float | None = None
    sinkhorn: bool = True
    derandomize: bool = True
    c0: float = 1.0
    activation: tuple | None = None
    threshold: object = "ville"
    calibration_file: str | None = None
    max_n: int | None = None
    seed: int = 0
    tie_policy: str = "error"
    n_paths: int = 10
    merge: str = "arithmetic"
    method: str = "grid"
    bet_k: int = 2
    max_iter: int = MAX_ITER
    tol_factor: float = TOL_FACTOR

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.activation is not None:
            object.__setattr__(self, "activation", tuple(int(a) for a in self.activation))
        self.validate()

    # derived values

    @property
    def resolved_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.depths), 1.0 / len(self.depths))
        return np.asarray(self.weights, dtype=float)

    @property
    def resolved_w0(self) -> float:
        if self.w0 is None:
            return 0.2 if self.eta == 0 else 0.0
        return float(self.w0)

    @property
    def resolved_activation(self) -> tuple:
        if self.activation is None:
            if self.method == "seqbet":
                return (2 ** self.bet_k,)
            return self.depths
        return self.activation

    @property
    def randomized(self) -> bool:
        return (not self.derandomize) or self.tie_policy != "error"

    @property
    def n_engines(self) -> int:
        return self.n_paths if self.tie_policy == "randomized_paths" else 1

    def validate(self):
        if not (isinstance(self.alpha, (int, float)) and 0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.tie_policy not in TIE_POLICIES:
            raise ConfigError(f"tie_policy must be one of {TIE_POLICIES}")
        if self.merge not in MERGES:
            raise ConfigError(f"merge must be one of {MERGES}")
        if self.method == "grid":
            validate_weights(self.depths, self.resolved_weights, self.resolved_w0, self.eta)
            if self.activation is not None and len(self.activation) != len(self.depths):
                raise ConfigError("one activation time per depth required")
        elif not (int(self.bet_k) == self.bet_k and self.bet_k >= 1):
            raise ConfigError("bet_k must be a positive integer")
        if any(a < 0 for a in self.resolved_activation):
            raise ConfigError("activation times must be non-negative")
        if not self.c0 > 0:
            raise ConfigError("c0 must be positive")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.max_n is not None and self.max_n < 1:
            raise ConfigError("max_n must be positive")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be an integer in [0, 2**64)")
        if self.max_iter < 0 or self.tol_factor < 1.0:
            raise ConfigError("invalid Sinkhorn stopping parameters")
        parse_threshold(self.threshold)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("depths", "weights", "activation"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def fingerprint(self) -> str:
        """Hash of the fields that shape the null distribution of the path."""
        core = {
            "method": self.method,
            "randomized": self.randomized,
            "c0": float(self.c0),
            "activation": list(self.resolved_activation),
        }
        if self.method == "grid":
            core.update(
                depths=list(self.depths),
                weights=[float(w) for w in self.resolved_weights],
                eta=float(self.eta),
                w0=self.resolved_w0,
                sinkhorn=bool(self.sinkhorn),
                max_iter=int(self.max_iter),
                tol_factor=float(self.tol_factor),
            )
        else:
            core["bet_k"] = int(self.bet_k)
        blob = json.dumps(core, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_threshold(spec):
    """Return ``("ville", None)``, ``("fixed", L)`` or ``("calibrated", N)``."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        if not (math.isfinite(spec) and spec >= 1.0):
            raise ConfigError(f"fixed threshold must be >= 1, got {spec!r}")
        return "fixed", float(spec)
    if isinstance(spec, str):
        if spec == "ville":
            return "ville", None
        for prefix in ("calibrated:", "auto:"):
            if spec.startswith(prefix):
                try:
                    horizon = int(spec[len(prefix):])
                except ValueError:
                    break
                if horizon < 1:
                    break
                return "calibrated", horizon
        try:
            return parse_threshold(float(spec))
        except ValueError:
            pass
    raise ConfigError(f"unrecognized threshold {spec!r}")
