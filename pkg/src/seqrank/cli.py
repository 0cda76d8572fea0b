"""Command-line interface.

Exit codes: 0 the run completed (the decision is in the output), 2 usage or
configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from contextlib import contextmanager

import numpy as np

from .config import METHODS, MERGES, TIE_POLICIES, SessionConfig
from .errors import ConfigError, SeqRankError, TiesPresent

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _ints(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _noise(text):
    levels = _ints(text)
    if not levels or any(not 0 <= l <= 10 for l in levels):
        raise argparse.ArgumentTypeError(f"noise levels must lie in 0..10, got {text!r}")
    return levels


def default_threads() -> int:
    env = os.environ.get("SEQRANK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_config_flags(p):
    g = p.add_argument_group("test configuration")
    g.add_argument("--alpha", type=float, default=0.05)
    g.add_argument("--method", choices=METHODS, default="grid")
    g.add_argument("--depths", type=_ints, default=(2, 4, 8, 16))
    g.add_argument("--weights", type=_floats)
    g.add_argument("--eta", type=float, default=0.0)
    g.add_argument("--w0", type=float)
    g.add_argument("--sinkhorn", dest="sinkhorn", action="store_true", default=True)
    g.add_argument("--no-sinkhorn", dest="sinkhorn", action="store_false")
    g.add_argument("--derandomize", dest="derandomize", action="store_true", default=True)
    g.add_argument("--no-derandomize", dest="derandomize", action="store_false")
    g.add_argument("--c0", type=float, default=1.0)
    g.add_argument("--activation", type=_ints,
                   help="warm-up length per depth (default: the depth itself)")
    g.add_argument("--bet-k", type=int, default=2, help="binary depth of --method seqbet")
    g.add_argument("--threshold", default="ville",
                   help="'ville' (1/alpha), a number L >= 1, or auto:N for a calibrated threshold")
    g.add_argument("--calibration-file")
    g.add_argument("--max-n", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tie-policy", choices=TIE_POLICIES, default="error")
    g.add_argument("--n-paths", type=int, default=10)
    g.add_argument("--merge", choices=MERGES, default="arithmetic")


def config_from_args(args) -> SessionConfig:
    threshold = args.threshold
    try:
        threshold = float(threshold)
    except ValueError:
        pass
    return SessionConfig(
        alpha=args.alpha, depths=args.depths, weights=args.weights, eta=args.eta,
        w0=args.w0, sinkhorn=args.sinkhorn, derandomize=args.derandomize, c0=args.c0,
        activation=args.activation, threshold=threshold,
        calibration_file=args.calibration_file, max_n=args.max_n, seed=args.seed,
        tie_policy=args.tie_policy, n_paths=args.n_paths, merge=args.merge,
        method=args.method, bet_k=args.bet_k)


@contextmanager
def _open_out(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def read_pairs(lines):
    """Yield ``(line_no, x, y)``; a non-numeric first line is taken as a header."""
    for no, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        cells = [c.strip() for c in text.replace("\t", ",").split(",")]
        if len(cells) != 2:
            if no == 1:
                continue
            raise DataError(f"line {no}: expected two columns, got {len(cells)}")
        try:
            x, y = float(cells[0]), float(cells[1])
        except ValueError:
            if no == 1:
                continue
            raise DataError(f"line {no}: non-numeric value in {text!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"line {no}: non-finite value in {text!r}")
        yield no, x, y


# -- test ------------------------------------------------------------------


def _depth_columns(cfg):
    if cfg.method == "seqbet":
        return [f"log10_m_bet{2 ** cfg.bet_k}"]
    return [f"log10_m_d{d}" for d in cfg.depths]


def cmd_test(args) -> int:
    from .session import Session
    from .simulation import sample_scenario

    cfg = config_from_args(args)
    if (args.input is None) == (args.scenario is None):
        raise UsageError("give exactly one of --input or --scenario")
    session = Session(cfg)
    if args.scenario is not None:
        n = args.n or cfg.max_n
        if n is None:
            raise UsageError("--scenario needs --n or --max-n")
        x, y = sample_scenario(args.scenario, args.noise, n,
                               np.random.default_rng(args.data_seed))
        source = ((i + 1, a, b) for i, (a, b) in enumerate(zip(x.tolist(), y.tolist())))
        fh_in = None
    else:
        fh_in = sys.stdin if args.input == "-" else open(args.input, newline="")
        source = read_pairs(fh_in)

    cols = ["n", "log10_m", *_depth_columns(cfg), "p_value", "decision"]
    try:
        with _open_out(args.output) as out:
            write = _row_writer(out, cols, args.format)
            last = None
            every = max(1, args.every)
            for line_no, xv, yv in source:
                try:
                    rep = session.observe(xv, yv)
                except TiesPresent as exc:
                    raise DataError(f"line {line_no}: {exc}") from None
                last = rep
                if rep.n % every == 0 or session.stopped:
                    write([rep.n, rep.log10_m, *rep.log10_depths, rep.p_value, rep.decision])
                if session.stopped:
                    break
            if last is not None and last.n % every != 0 and not session.stopped:
                write([last.n, last.log10_m, *last.log10_depths, last.p_value, last.decision])
    finally:
        if fh_in is not None and fh_in is not sys.stdin:
            fh_in.close()
    if args.snapshot:
        with open(args.snapshot, "wb") as fh:
            fh.write(session.snapshot())
    return EXIT_OK


def _row_writer(out, cols, fmt):
    if fmt == "jsonl":
        def write(values):
            out.write(json.dumps(dict(zip(cols, values))) + "\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(cols)

        def write(values):
            w.writerow([_fmt(v) for v in values])
    return write


# -- simulate --------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .session import resolve_threshold
    from .simulation import ScenarioSpec, run_experiment

    cfg = config_from_args(args)
    budget = args.max_n or cfg.max_n
    if budget is None:
        raise UsageError("simulate needs --max-n")
    L = resolve_threshold(cfg)
    horizons = args.horizons or tuple(range(args.step, budget + 1, args.step))
    rows, summaries = [], []
    for noise in args.noise_levels:
        spec = ScenarioSpec(args.scenario, noise, budget, args.data_seed)
        res = run_experiment(spec, cfg, args.reps, budget, threshold=L, threads=args.threads)
        summaries.append(res.summary())
        rows += [(args.scenario, noise, h, r) for h, r in res.rejection_curve(horizons)]
        if args.per_rep:
            base, ext = os.path.splitext(args.per_rep)
            with open(f"{base}_l{noise}{ext or '.csv'}", "w") as fh:
                fh.write(res.to_csv())
    with _open_out(args.output) as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["scenario", "noise", "n", "rejection_rate"])
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    doc = json.dumps(summaries if len(summaries) > 1 else summaries[0], indent=2)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(doc + "\n")
    else:
        print(doc, file=sys.stderr)
    return EXIT_OK


# -- calibrate -------------------------------------------------------------


def cmd_calibrate(args) -> int:
    from .calibration import calibrate_alphas, save_tables

    cfg = config_from_args(args)
    alphas = args.alphas or (cfg.alpha,)
    tables = calibrate_alphas(cfg, alphas, args.horizons, args.reps, seed=args.seed,
                              threads=args.threads)
    if args.output and args.output != "-":
        save_tables(tables, args.output)
    else:
        print(json.dumps({"version": 1, "tables": [t.to_dict() for t in tables]}, indent=1))
    for t in tables:
        line = ", ".join(f"N={e.N}: L={e.L:.3f}" for e in t.entries)
        print(f"alpha={t.alpha} fingerprint={t.fingerprint}: {line}", file=sys.stderr)
        if t.warning:
            print(f"warning: {t.warning}", file=sys.stderr)
    return EXIT_OK


# -- baseline-sr -----------------------------------------------------------


def cmd_baseline_sr(args) -> int:
    from .baseline import run_sr_experiment
    from .session import resolve_threshold
    from .simulation import ScenarioSpec, run_experiment

    cfg = config_from_args(args)
    budget = args.max_n or cfg.max_n
    if budget is None:
        raise UsageError("baseline-sr needs --max-n")
    L = resolve_threshold(cfg)
    spec = ScenarioSpec(args.scenario, args.noise, budget, args.data_seed)
    res = run_sr_experiment(spec, args.reps, budget, L, threads=args.threads)
    doc = {"baseline_sr": res.summary()}
    if args.compare:
        doc["rank_test"] = run_experiment(spec, cfg, args.reps, budget, threshold=L,
                                          threads=args.threads).summary()
    with _open_out(args.output) as out:
        out.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


# -- entry point -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    from .simulation import SCENARIOS

    p = _Parser(prog="seqrank", description="Sequential rank tests of independence.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="monitor one stream")
    t.add_argument("--input", help="CSV with two numeric columns, or - for stdin")
    t.add_argument("--scenario", choices=SCENARIOS)
    t.add_argument("--noise", type=lambda s: _noise(s)[0], default=1)
    t.add_argument("--n", type=int, help="pairs to draw with --scenario (default --max-n)")
    t.add_argument("--data-seed", type=int, default=0)
    t.add_argument("--output", "-o")
    t.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    t.add_argument("--every", type=int, default=1, help="emit every k-th step (and the last)")
    t.add_argument("--snapshot", help="write the final session snapshot here")
    _add_config_flags(t)
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="power and stopping times on a scenario")
    s.add_argument("--scenario", choices=SCENARIOS, required=True)
    s.add_argument("--noise", dest="noise_levels", type=_noise, default=(1,))
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--data-seed", type=int, default=0)
    s.add_argument("--horizons", type=_ints)
    s.add_argument("--step", type=int, default=16, help="horizon spacing of the curve")
    s.add_argument("--output", "-o", help="rejection-rate curve CSV (default stdout)")
    s.add_argument("--summary", help="JSON summary path (default stderr)")
    s.add_argument("--per-rep", help="per-replication CSV path")
    s.add_argument("--threads", type=int, default=default_threads())
    _add_config_flags(s)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="Monte Carlo thresholds for truncated tests")
    c.add_argument("--alphas", type=_floats, help="levels (default --alpha)")
    c.add_argument("--horizons", type=_ints, required=True)
    c.add_argument("--reps", type=int, default=20000)
    c.add_argument("--output", "-o")
    c.add_argument("--threads", type=int, default=default_threads())
    _add_config_flags(c)
    c.set_defaults(func=cmd_calibrate)

    b = sub.add_parser("baseline-sr", help="pairwise betting baseline on a scenario")
    b.add_argument("--scenario", choices=SCENARIOS, required=True)
    b.add_argument("--noise", type=lambda s: _noise(s)[0], default=1)
    b.add_argument("--reps", type=int, default=500)
    b.add_argument("--data-seed", type=int, default=0)
    b.add_argument("--compare", action="store_true",
                   help="also run the rank test on the same replications")
    b.add_argument("--output", "-o")
    b.add_argument("--threads", type=int, default=default_threads())
    _add_config_flags(b)
    b.set_defaults(func=cmd_baseline_sr)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"seqrank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"seqrank: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"seqrank: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SeqRankError, OSError) as exc:
        print(f"seqrank: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
