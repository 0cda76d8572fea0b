"""Streaming independence test.

A :class:`Session` consumes one pair at a time and reports the running
test martingale, an anytime-valid p-value and a decision. Stopping only
ever depends on the ranks of the data, so the reported type-I error
guarantee holds for any data-independent monitoring schedule. Stopping rules
that look at the raw observations themselves are not covered.

Snapshot schema (JSON, ``version`` 1)::

    version       int      schema version
    config        object   SessionConfig.to_dict()
    threshold     float    resolved rejection threshold L
    n             int      observations consumed
    decision      str      last decision
    max_log10     float    running max of the reported log10 aggregate (>= 0)
    x, y          b64      sorted float64 rank multisets
    warm_x/warm_y b64      raw values held for the warm-up backfill
                           (derandomized mode only)
    engines       list     one object per test path:
        stream             randomization stream id
        agg, log_max       natural-log aggregate and its running max (>= 0)
        warm_r/warm_s      buffered randomized warm-up ranks (b64)
      grid method:
        counts             concatenated d x d count matrices (b64)
        rs, cs             concatenated Sinkhorn row/column scalings (b64)
        n_seen             per-depth number of counted observations
        log_m_depths       per-depth natural-log martingales (b64)
      seqbet method:
        h1, log_m_each     per-interaction first-bin counts and log martingales
        n_seen, n_obs      counted / consumed observations
        buffer             buffered warm-up rank pairs (b64)

``b64`` fields are base64-encoded little-endian float64 arrays.

The randomization uniforms are a pure function of (seed, stream, n), so
``config.seed`` and ``n`` are the whole RNG state.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels
from ._rng import UniformStream
from .config import SessionConfig, parse_threshold
from .derandomize import merge_log_maxima
from .errors import (
    ConfigError,
    CorruptSnapshot,
    InvalidObservation,
    ObserveAfterStop,
    SnapshotVersionError,
    TiesPresent,
)
from .ranks import RankState
from .seqbet import BetState

SNAPSHOT_VERSION = 1
LN10 = math.log(10.0)

CONTINUE = "continue"
REJECT = "reject"
BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class StepReport:
    n: int
    log10_depths: tuple
    log10_m: float
    p_value: float
    decision: str

    def as_row(self) -> dict:
        row = {"n": self.n, "log10_m": self.log10_m}
        for i, v in enumerate(self.log10_depths):
            row[f"log10_m_{i}"] = v
        row["p_value"] = self.p_value
        row["decision"] = self.decision
        return row


def resolve_threshold(config: SessionConfig) -> float:
    kind, value = parse_threshold(config.threshold)
    if kind == "ville":
        return 1.0 / config.alpha
    if kind == "fixed":
        return value
    from .calibration import lookup_threshold

    return lookup_threshold(config, value)


def _b64(a) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _unb64(s) -> np.ndarray:
    if not isinstance(s, str):
        raise CorruptSnapshot("expected a base64 string")
    try:
        raw = base64.b64decode(s.encode("ascii"), validate=True)
    except (ValueError, UnicodeEncodeError) as exc:
        raise CorruptSnapshot(f"bad base64 payload: {exc}") from None
    if len(raw) % 8:
        raise CorruptSnapshot("float64 payload has a ragged length")
    return np.frombuffer(raw, dtype="<f8").astype(float)


class _Engine:
    """One test path: per-depth states plus the aggregate ledger."""

    def __init__(self, config: SessionConfig, stream: int):
        self.config = config
        self.stream = stream
        self.randomized = config.randomized
        self.uniforms = UniformStream(config.seed, stream) if self.randomized else None
        self.is_grid = config.method == "grid"
        act = config.resolved_activation
        if self.is_grid:
            self.depths = np.asarray(config.depths, dtype=np.int64)
            self.n_act = np.asarray(act, dtype=np.int64)
            self.offs, self.voffs = _kernels.grid_layout(self.depths)
            K = self.depths.size
            self.H = np.zeros(self.offs[K])
            self.W = np.zeros(2 * self.offs[K])
            self.rs = np.ones(self.voffs[K])
            self.cs = np.ones(self.voffs[K])
            dmax = int(self.depths.max())
            self.px = np.empty(dmax)
            self.py = np.empty(dmax)
            self.n_seen = np.zeros(K, dtype=np.int64)
            self.log_m_depths = np.zeros(K)
            self.log_f = np.zeros(K)
            self.weights = config.resolved_weights
            self.w0 = config.resolved_w0
            self.eta = float(config.eta)
            self.sinkhorn = bool(config.sinkhorn)
            self.max_iter = int(config.max_iter)
            self.tol = float(config.tol_factor)
            self.c0 = float(config.c0)
        else:
            self.bet = BetState(config.bet_k, c0=config.c0, n_act=act[0])
        self.warm_len = max(act) if self.randomized else 0
        self.warm_r = np.empty(max(self.warm_len, 1))
        self.warm_s = np.empty(max(self.warm_len, 1))
        self.agg = 0.0
        self.log_max = 0.0

    def step(self, px, py, n, warm_x, warm_y) -> float:
        r = s = 0.0
        if self.randomized:
            u, v = self.uniforms.pair(n - 1)
            r = _kernels.randomized_rank(px[0], px[1], n, u)
            s = _kernels.randomized_rank(py[0], py[1], n, v)
            if n <= self.warm_len:
                self.warm_r[n - 1] = r
                self.warm_s[n - 1] = s
            warm_x, warm_y = self.warm_r, self.warm_s
        if self.is_grid:
            self.agg += _kernels.grid_step(
                not self.randomized, self.depths, self.offs, self.voffs, self.n_act,
                self.weights, self.w0, self.eta, self.c0, self.sinkhorn, self.max_iter,
                self.tol, self.H, self.W, self.rs, self.cs, self.px, self.py,
                self.n_seen, self.log_m_depths, self.log_f, n, px[0], py[0], r, s,
                warm_x, warm_y)
        else:
            bet = self.bet
            if self.randomized:
                bet.update(r, s)
            elif n <= bet.n_act:
                bet.hold()
                if n == bet.n_act:
                    bet.backfill(warm_x[:n], warm_y[:n])
            else:
                bet.update_rect(px[0], py[0], n)
            self.agg = bet.log_m
        if self.agg > self.log_max:
            self.log_max = self.agg
        return self.agg

    def part_log_m(self) -> np.ndarray:
        if self.is_grid:
            return self.log_m_depths
        return np.array([self.bet.log_m])

    # snapshot support

    def state(self, n: int) -> dict:
        m = min(self.warm_len, n)
        st = {"stream": self.stream, "agg": self.agg, "log_max": self.log_max,
              "warm_r": _b64(self.warm_r[:m]), "warm_s": _b64(self.warm_s[:m])}
        if self.is_grid:
            st.update(counts=_b64(self.H), rs=_b64(self.rs), cs=_b64(self.cs),
                      n_seen=[int(v) for v in self.n_seen],
                      log_m_depths=_b64(self.log_m_depths))
        else:
            b = self.bet
            st.update(h1=_b64(b.h1), log_m_each=_b64(b.log_m_each), n_seen=b.n_seen,
                      n_obs=b.n_obs, buffer=_b64(np.asarray(b.buffer, float).reshape(-1)))
        return st

    def load(self, st: dict, n: int) -> None:
        self.agg = float(st["agg"])
        self.log_max = float(st["log_max"])
        m = min(self.warm_len, n)
        self.warm_r[:m] = _fixed(_unb64(st["warm_r"]), (m,))
        self.warm_s[:m] = _fixed(_unb64(st["warm_s"]), (m,))
        if self.is_grid:
            self.H[:] = _fixed(_unb64(st["counts"]), self.H.shape)
            self.rs[:] = _fixed(_unb64(st["rs"]), self.rs.shape)
            self.cs[:] = _fixed(_unb64(st["cs"]), self.cs.shape)
            self.n_seen[:] = _fixed(np.asarray(st["n_seen"], dtype=np.int64), self.n_seen.shape)
            self.log_m_depths[:] = _fixed(_unb64(st["log_m_depths"]), self.log_m_depths.shape)
        else:
            b = self.bet
            b.h1 = _fixed(_unb64(st["h1"]), b.h1.shape).copy()
            b.log_m_each = _fixed(_unb64(st["log_m_each"]), b.log_m_each.shape).copy()
            b.n_seen = int(st["n_seen"])
            b.n_obs = int(st["n_obs"])
            buf = _unb64(st["buffer"])
            if buf.size % 2:
                raise CorruptSnapshot("odd-length warm-up buffer")
            b.buffer = [(float(a), float(c)) for a, c in buf.reshape(-1, 2)]


def _fixed(a, shape):
    if a.size != int(np.prod(shape)):
        raise CorruptSnapshot(f"array of size {a.size}, expected {shape}")
    return a.reshape(shape)


class Session:
    """One monitored stream.

    >>> s = Session(SessionConfig())
    >>> s.observe(0.3, 1.2).log10_m
    0.0
    """

    def __init__(self, config: SessionConfig | None = None, *, _threshold=None):
        self.config = config if config is not None else SessionConfig()
        self.threshold = (resolve_threshold(self.config) if _threshold is None
                          else float(_threshold))
        if not self.threshold >= 1.0:
            raise ConfigError("resolved threshold must be >= 1")
        self._log_threshold = math.log(self.threshold)
        self.ranks_x = RankState()
        self.ranks_y = RankState()
        self.engines = [_Engine(self.config, b) for b in range(self.config.n_engines)]
        self.n = 0
        self.decision = CONTINUE
        self.max_log10 = 0.0
        self._warm_len = 0 if self.config.randomized else max(self.config.resolved_activation)
        self.warm_x = np.empty(self._warm_len)
        self.warm_y = np.empty(self._warm_len)

    @property
    def stopped(self) -> bool:
        return self.decision != CONTINUE

    @property
    def log10_m(self) -> float:
        return self._aggregate() / LN10

    def _aggregate(self) -> float:
        if len(self.engines) == 1:
            return self.engines[0].agg
        a = np.array([e.agg for e in self.engines])
        return float(_kernels.log_mean_exp(a))

    def observe(self, x: float, y: float) -> StepReport:
        if self.stopped:
            raise ObserveAfterStop(f"session stopped at n={self.n} ({self.decision})")
        x = float(x)
        y = float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise InvalidObservation(f"observations must be finite, got ({x!r}, {y!r})")
        cfg = self.config
        if not cfg.randomized and (self.ranks_x.at(x) or self.ranks_y.at(y)):
            raise TiesPresent(
                f"tied value at n={self.n + 1}; configure tie_policy="
                "'randomized_paths' or 'single_randomized' for discrete data")
        rx = self.ranks_x.insert_and_rank(x)
        ry = self.ranks_y.insert_and_rank(y)
        n = rx.n
        self.n = n
        if n <= self._warm_len:
            self.warm_x[n - 1] = x
            self.warm_y[n - 1] = y
        px = (rx.count_le, rx.count_lt)
        py = (ry.count_le, ry.count_lt)
        for eng in self.engines:
            eng.step(px, py, n, self.warm_x, self.warm_y)

        if len(self.engines) == 1:
            eng = self.engines[0]
            agg = eng.agg
            depths = eng.part_log_m() / LN10
            log10_m = agg / LN10
            if log10_m > self.max_log10:
                self.max_log10 = log10_m
            p = 10.0 ** (-self.max_log10)
            reject = agg >= self._log_threshold
        else:
            agg = self._aggregate()
            parts = np.stack([e.part_log_m() for e in self.engines])
            depths = np.array([_kernels.log_mean_exp(parts[:, i].copy())
                               for i in range(parts.shape[1])]) / LN10
            log10_m = agg / LN10
            self.max_log10 = max(self.max_log10, log10_m)
            p = min(1.0, merge_log_maxima([e.log_max for e in self.engines], cfg.merge))
            reject = p <= 1.0 / self.threshold

        if reject:
            self.decision = REJECT
        elif cfg.max_n is not None and n >= cfg.max_n:
            self.decision = BUDGET_EXHAUSTED
        return StepReport(n, tuple(float(v) for v in depths), float(log10_m),
                          float(p), self.decision)

    def observe_many(self, xs: Iterable[float], ys: Iterable[float]) -> list[StepReport]:
        """Feed pairs until the data run out or the session stops."""
        out = []
        for x, y in zip(xs, ys):
            out.append(self.observe(x, y))
            if self.stopped:
                break
        return out

    # snapshots

    def snapshot(self) -> bytes:
        doc = {
            "version": SNAPSHOT_VERSION,
            "config": self.config.to_dict(),
            "threshold": self.threshold,
            "n": self.n,
            "decision": self.decision,
            "max_log10": self.max_log10,
            "x": _b64(self.ranks_x.values()),
            "y": _b64(self.ranks_y.values()),
            "warm_x": _b64(self.warm_x[: min(self.n, self._warm_len)]),
            "warm_y": _b64(self.warm_y[: min(self.n, self._warm_len)]),
            "engines": [e.state(self.n) for e in self.engines],
        }
        return json.dumps(doc, separators=(",", ":")).encode("utf-8")

    @classmethod
    def restore(cls, blob: bytes | str) -> "Session":
        try:
            doc = json.loads(blob)
        except (ValueError, TypeError) as exc:
            raise CorruptSnapshot(f"snapshot is not valid JSON: {exc}") from None
        if not isinstance(doc, dict) or "version" not in doc:
            raise CorruptSnapshot("snapshot has no version field")
        if doc["version"] != SNAPSHOT_VERSION:
            raise SnapshotVersionError(
                f"snapshot version {doc['version']!r}, expected {SNAPSHOT_VERSION}")
        try:
            return cls._from_doc(doc)
        except (KeyError, TypeError, AttributeError) as exc:
            raise CorruptSnapshot(f"malformed snapshot: {exc!r}") from None

    @classmethod
    def _from_doc(cls, doc) -> "Session":
        config = SessionConfig.from_dict(doc["config"])
        s = cls(config, _threshold=float(doc["threshold"]))
        n = int(doc["n"])
        xs = _unb64(doc["x"])
        ys = _unb64(doc["y"])
        if xs.size != n or ys.size != n:
            raise CorruptSnapshot("rank multisets do not match n")
        s.ranks_x = RankState(xs)
        s.ranks_y = RankState(ys)
        s.n = n
        if doc["decision"] not in (CONTINUE, REJECT, BUDGET_EXHAUSTED):
            raise CorruptSnapshot(f"unknown decision {doc['decision']!r}")
        s.decision = doc["decision"]
        s.max_log10 = float(doc["max_log10"])
        wx = _unb64(doc["warm_x"])
        wy = _unb64(doc["warm_y"])
        m = min(n, s._warm_len)
        s.warm_x[:m] = _fixed(wx, (m,))
        s.warm_y[:m] = _fixed(wy, (m,))
        if len(doc["engines"]) != len(s.engines):
            raise CorruptSnapshot("engine count does not match the config")
        for e, st in zip(s.engines, doc["engines"]):
            e.load(st, n)
        return s


def new_session(config: SessionConfig | None = None) -> Session:
    return Session(config)
