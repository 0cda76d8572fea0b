"""Monte Carlo rejection thresholds for tests truncated at a horizon N.

Ville's inequality makes ``1/alpha`` valid for an unbounded horizon, which is
conservative when monitoring stops at ``N``. Because the tests only see
ranks, the null law of the running maximum is the same for every continuous
null distribution, so ``L_{alpha,N}`` can be simulated once per
configuration.

Table file (JSON, ``version`` 1)::

    {"version": 1, "fingerprint": str, "alpha": float, "reps": int,
     "seed": int, "config": {...}, "warning": str | null,
     "entries": [{"N": int, "L": float,
                  "p_cdf_summary": {"levels": [...], "cdf": [...]}}]}

A file may also hold ``{"version": 1, "tables": [table, ...]}``.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .config import SessionConfig
from .errors import ConfigError, InvalidInput
from .paths import run_path

TABLE_VERSION = 1
MIN_REPS = 1000
CDF_LEVELS = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)


def _null_data(seed, rep: int, N: int):
    u = np.random.default_rng([int(seed), int(rep)]).random((2, N))
    return u[0], u[1]


def simulate_null_path(config: SessionConfig, N: int, seed: int, rep: int = 0) -> np.ndarray:
    """Natural-log aggregate along one null path of length ``N``.

    The data are iid uniform pairs (any continuous null gives the same path
    law); randomized configurations draw their uniforms from ``(seed, rep)``.
    """
    if N < 0:
        raise InvalidInput("N must be non-negative")
    x, y = _null_data(seed, rep, N)
    return run_path(config, x, y, rand_seed=(int(seed), int(rep)))[1]


def simulate_null_running_max(config: SessionConfig, N: int, seed: int, rep: int = 0) -> float:
    """``max_{n <= N} M_n`` (with ``M_0 = 1``) on one null path."""
    path = simulate_null_path(config, N, seed, rep)
    return math.exp(max(0.0, float(path.max()))) if path.size else 1.0


def running_log_maxima(config: SessionConfig, horizons, reps: int, seed: int,
                       threads: int | None = None) -> np.ndarray:
    """``reps x len(horizons)`` array of log running maxima on common paths."""
    horizons = np.asarray(sorted(int(h) for h in horizons), dtype=np.int64)
    N = int(horizons[-1]) if horizons.size else 0

    def one(rep):
        path = simulate_null_path(config, N, seed, rep)
        run = np.maximum.accumulate(np.maximum(path, 0.0))
        return np.where(horizons > 0, run[np.maximum(horizons - 1, 0)] if N else 0.0, 0.0)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(reps)))
    else:
        rows = [one(r) for r in range(reps)]
    return np.array(rows).reshape(reps, horizons.size)


def upper_quantile(samples, alpha: float) -> float:
    """The ``ceil((1 - alpha) * reps)``-th order statistic."""
    s = np.sort(np.asarray(samples, dtype=float))
    k = math.ceil((1.0 - alpha) * s.size - 1e-9)
    return float(s[max(k, 1) - 1])


@dataclass
class CalibrationEntry:
    N: int
    L: float
    levels: tuple = CDF_LEVELS
    cdf: tuple = ()

    def to_dict(self) -> dict:
        return {"N": self.N, "L": self.L,
                "p_cdf_summary": {"levels": list(self.levels), "cdf": list(self.cdf)}}


@dataclass
class CalibrationTable:
    fingerprint: str
    alpha: float
    reps: int
    seed: int
    config: dict
    entries: list = field(default_factory=list)
    warning: str | None = None

    def threshold(self, N: int) -> float:
        for e in self.entries:
            if e.N == N:
                return e.L
        raise ConfigError(f"calibration table has no entry for N={N}")

    def to_dict(self) -> dict:
        return {"version": TABLE_VERSION, "fingerprint": self.fingerprint,
                "alpha": self.alpha, "reps": self.reps, "seed": self.seed,
                "config": self.config, "warning": self.warning,
                "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationTable":
        if doc.get("version") != TABLE_VERSION:
            raise ConfigError(f"unsupported calibration table version {doc.get('version')!r}")
        try:
            entries = [CalibrationEntry(int(e["N"]), float(e["L"]),
                                        tuple(e["p_cdf_summary"]["levels"]),
                                        tuple(e["p_cdf_summary"]["cdf"]))
                       for e in doc["entries"]]
            return cls(doc["fingerprint"], float(doc["alpha"]), int(doc["reps"]),
                       int(doc["seed"]), doc.get("config", {}), entries, doc.get("warning"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed calibration table: {exc!r}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def calibrate(config: SessionConfig, alpha: float, horizons, reps: int,
              seed: int = 0, threads: int | None = None) -> CalibrationTable:
    """Estimate ``L_{alpha,N}`` for every horizon on ``reps`` common null paths.

    ``L`` is the conservative upper order statistic of the running maxima,
    capped at ``1/alpha``. Fewer than 1000 replications trigger a warning
    that is also stored in the table.
    """
    return calibrate_alphas(config, [alpha], horizons, reps, seed, threads)[0]


def calibrate_alphas(config: SessionConfig, alphas, horizons, reps: int,
                     seed: int = 0, threads: int | None = None) -> list[CalibrationTable]:
    """One table per level, all estimated from the same null paths."""
    alphas = [float(a) for a in alphas]
    if not alphas or not all(0.0 < a < 1.0 for a in alphas):
        raise InvalidInput("alpha must lie in (0, 1)")
    horizons = sorted({int(h) for h in horizons})
    if not horizons or horizons[0] < 1:
        raise InvalidInput("horizons must be positive integers")
    if reps < 1:
        raise InvalidInput("reps must be positive")
    note = None
    if reps < MIN_REPS:
        note = f"only {reps} replications; thresholds are noisy below {MIN_REPS}"
        warnings.warn(note, stacklevel=3)
    logmax = running_log_maxima(config, horizons, reps, seed, threads)
    core = config.to_dict()
    for k in ("seed", "threshold", "alpha", "max_n", "calibration_file"):
        core.pop(k, None)
    tables = []
    for alpha in alphas:
        entries = []
        for j, N in enumerate(horizons):
            L = min(upper_quantile(np.exp(logmax[:, j]), alpha), 1.0 / alpha)
            p = np.exp(-logmax[:, j])
            cdf = tuple(float(np.mean(p <= lv)) for lv in CDF_LEVELS)
            entries.append(CalibrationEntry(N, L, CDF_LEVELS, cdf))
        tables.append(CalibrationTable(config.fingerprint(), alpha, int(reps), int(seed),
                                       core, entries, note))
    return tables


def load_tables(path) -> list[CalibrationTable]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read calibration table {path}: {exc}") from None
    if isinstance(doc, dict) and "tables" in doc:
        return [CalibrationTable.from_dict(t) for t in doc["tables"]]
    return [CalibrationTable.from_dict(doc)]


def save_tables(tables, path) -> None:
    doc = {"version": TABLE_VERSION, "tables": [t.to_dict() for t in tables]}
    Path(path).write_text(json.dumps(doc, indent=1))


def packaged_tables() -> list[CalibrationTable]:
    out = []
    for entry in resources.files("seqrank").joinpath("data").iterdir():
        if entry.name.endswith(".json"):
            with resources.as_file(entry) as p:
                out.extend(load_tables(p))
    return out


def lookup_threshold(config: SessionConfig, N: int) -> float:
    """Calibrated ``L_{alpha,N}`` for ``config`` from its table file or the packaged ones."""
    tables = load_tables(config.calibration_file) if config.calibration_file else packaged_tables()
    fp = config.fingerprint()
    for t in tables:
        if t.fingerprint == fp and math.isclose(t.alpha, config.alpha, rel_tol=0, abs_tol=1e-12):
            for e in t.entries:
                if e.N == N:
                    return e.L
    raise ConfigError(
        f"no calibration table covers this configuration (fingerprint {fp}) at "
        f"alpha={config.alpha}, N={N}; run `seqrank calibrate` and pass the file "
        "via calibration_file / --calibration-file")
