"""Command-line front end.

Subcommands: ``test``, ``sample``, ``power``, ``uad-table`` and ``critval``.
Global flags ``--seed``, ``--threads``, ``--out`` and ``--config`` may be given
before or after the subcommand. ``test`` exits with 0 (no rejection),
1 (rejection) or 2 (error).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .distributions import NullCache, run_test
from .experiments import ExperimentConfig, InfeasibleError, run_experiment, write_rows
from .rng import RandomStream
from .sample import SampleFormatError, read_sample_csv, write_sample_csv
from .samplers import CapSpec, RotSymSpec, north_pole, sample_cap, sample_rotsym, sample_uad, sample_uniform_sphere
from .statistics import StatSpec, TieError

PROCESSES = ("uniform", "vmf", "mixvmf", "smallcircle", "cap", "uad")


def _globals(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(None), help="master seed")
    parser.add_argument("--threads", type=int, default=default(1), help="worker threads")
    parser.add_argument("--out", default=default(None), help="output CSV path")
    parser.add_argument("--config", default=default(None), help="experiment config file (key = value lines)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stereounif", description="Uniformity tests on the hypersphere.")
    _globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", parents=[common], help="test a data file for uniformity")
    p.add_argument("input", help="CSV file with one point per row")
    p.add_argument("--q", type=int, default=None, help="expected sphere dimension")
    p.add_argument("--a", type=float, default=0.0, help="kernel parameter in [-1, 1]")
    p.add_argument("--K", type=int, default=None, help="truncation of the kernel expansion")
    p.add_argument("--stat", default=None, help="rayleigh, bingham or pn instead of T_n(a)")
    p.add_argument("--method", choices=("exact", "asymptotic"), default="exact")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--m", type=int, default=10_000, help="Monte Carlo calibration replicates")
    p.add_argument("--cache", default=None, help="null model cache directory")

    p = sub.add_parser("sample", parents=[common], help="draw a sample and write it as CSV")
    p.add_argument("process", choices=PROCESSES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=0.25)
    p.add_argument("--theta", type=float, default=180.0, help="cap angle in degrees")
    p.add_argument("--mu", default=None, help="comma-separated location (default: north pole)")

    for name, exp in (("power", "local-power"), ("uad-table", "uad-table")):
        p = sub.add_parser(name, parents=[common], help=f"run the {exp} experiment")
        p.set_defaults(experiment=exp)
        p.add_argument("--q", type=int, action="append")
        p.add_argument("--n", type=int, action="append")
        p.add_argument("--M", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--cache", default=None)
        p.add_argument("--max-seconds", type=float, dest="max_seconds")

    p = sub.add_parser("critval", parents=[common], help="tabulate critical values")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--a", type=float, action="append")
    p.add_argument("--method", choices=("exact", "asymptotic"), default="asymptotic")
    p.add_argument("--n", type=int, default=100, help="sample size (exact method)")
    p.add_argument("--K", type=int, default=None, help="truncation (required for asymptotic on q = 2)")
    p.add_argument("--m", type=int, default=100_000)
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--cache", default="cache")
    p.add_argument("--max-seconds", type=float, dest="max_seconds", default=3600.0)
    return parser


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def cmd_test(args) -> int:
    sample = read_sample_csv(args.input, q=args.q)
    stat = StatSpec.parse(args.stat) if args.stat else StatSpec.tn(args.a, args.K)
    seed = 0 if args.seed is None else args.seed
    cache = NullCache(args.cache) if args.cache else None
    report = run_test(sample, stat, method=args.method, alpha=args.alpha, m=args.m, seed=seed,
                      cache=cache, threads=args.threads)
    print(report.summary())
    if args.out:
        row = {"input": args.input, "test": stat.display, "statistic": report.statistic,
               "p_value": report.p_value, "critical_value": report.critical_value, "alpha": report.alpha,
               "reject": int(report.reject), "method": report.method, "n": report.n, "q": report.q,
               "seed": report.seed}
        write_rows([row], args.out)
    return 1 if report.reject else 0


def cmd_sample(args) -> int:
    q, n = args.q, args.n
    seed = 0 if args.seed is None else args.seed
    mu = north_pole(q) if args.mu is None else np.array([float(v) for v in args.mu.split(",")])
    rng = RandomStream(seed)
    theta = math.radians(args.theta)
    if args.process == "uniform":
        sample = sample_uniform_sphere(q, n, rng)
    elif args.process == "cap":
        sample = sample_cap(CapSpec(mu, theta), q, n, rng)
    elif args.process == "uad":
        sample = sample_uad(q, n, theta, rng)
    else:
        sample = sample_rotsym(RotSymSpec(mu, args.kappa, args.process, args.nu), q, n, rng)
    if args.out:
        write_sample_csv(args.out, sample.points, seed=seed, process=args.process)
    else:
        from .sample import format_header

        print(format_header(q, n, seed, args.process))
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerows([[format(v, ".17g") for v in row] for row in sample.points])
    return 0


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(experiment=args.experiment)
    if cfg.experiment != args.experiment:
        raise ValueError(f"config describes {cfg.experiment!r}, not {args.experiment!r}")
    updates = {}
    for key in ("q", "n"):
        if getattr(args, key):
            updates[key] = tuple(getattr(args, key))
    for key in ("M", "m", "cache", "max_seconds", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            updates[key] = val
    if args.out:
        updates["out"] = args.out
    return replace(cfg, **updates) if updates else cfg


def _emit(rows, out):
    if out:
        path = write_rows(rows, out)
        print(f"wrote {len(rows)} rows to {path}")
    else:
        names = list(dict.fromkeys(k for row in rows for k in row))
        w = csv.DictWriter(sys.stdout, fieldnames=names, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    rows = run_experiment(cfg, threads=args.threads, progress=lambda s: print(s, file=sys.stderr))
    _emit(rows, cfg.out)
    return 0


def cmd_critval(args) -> int:
    if args.method == "asymptotic" and args.q == 2 and args.K is None:
        raise ValueError("the untruncated statistic has no asymptotic null distribution on S^2; pass --K")
    cfg = ExperimentConfig(
        experiment="null-calibration", q=(args.q,), n=(args.n,), a=tuple(args.a or (0.0,)),
        K=args.K, m=args.m, method=args.method, alphas=tuple(args.alpha or (0.10, 0.05, 0.01)),
        seed=0 if args.seed is None else args.seed, cache=args.cache, max_seconds=args.max_seconds,
    )
    rows = run_experiment(cfg, threads=args.threads)
    _emit(rows, args.out)
    return 0


COMMANDS = {"test": cmd_test, "sample": cmd_sample, "power": cmd_experiment,
            "uad-table": cmd_experiment, "critval": cmd_critval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SampleFormatError, TieError, InfeasibleError, ValueError, OSError) as exc:
        return _err(str(exc))


if __name__ == "__main__":
    sys.exit(main())
