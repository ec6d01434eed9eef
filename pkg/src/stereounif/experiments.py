"""Simulation harness: local power curves, UAD rejection tables and critical
value tabulation.

Work is split into cells identified by string keys such as
``power/q=2/n=500/ell=2/tau=3``. A cell draws from the substream named by its
key, and null models come from their own named substreams (optionally cached
on disk), so any cell can be re-run alone and reproduces bit for bit.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .coefficients import KernelSpec
from .distributions import (
    DEFAULT_TAIL_TOL,
    LocalAlternative,
    NullCache,
    asymptotic_model,
    asymptotic_power,
    exact_models,
)
from .rng import RandomStream
from .samplers import ANGULAR_FUNCTIONS, RotSymSpec, north_pole, rotsym_batch, uad_batch
from .statistics import StatSpec, evaluate_batch, kfold_batch

__all__ = [
    "ExperimentConfig",
    "InfeasibleError",
    "power_stats",
    "uad_stats",
    "cell_keys",
    "run_cell",
    "run_experiment",
    "estimate_seconds",
    "write_rows",
]

EXPERIMENTS = ("local-power", "uad-table", "null-calibration")
CELL_CHUNK = 250
POWER_K = 6
# seconds per (pair, replicate) for a full set of statistics; measured on one core
PAIR_COST = 1.2e-7


class InfeasibleError(RuntimeError):
    """The requested grid exceeds the time budget."""


# --- configuration ----------------------------------------------------------------


_LIST_KEYS = {"q", "n", "a", "ell", "tau", "theta", "fold_grid", "alphas"}

_DEFAULTS = {
    "local-power": {"q": [2, 3], "n": [500], "tau": [0, 1, 2, 3, 4, 5, 6], "ell": [2]},
    "uad-table": {"q": [2, 3], "n": [100], "theta": [1, 10, 20, 45, 90, 135, 180]},
    "null-calibration": {"q": [3], "n": [100], "alphas": [0.1, 0.05, 0.01]},
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        text = repr(value)
        return text[:-2] if text.endswith(".0") else text
    return str(value)


def _as_number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat description of an experiment.

    List-valued keys left as ``None`` take experiment-specific defaults
    (see ``resolved``). Angles ``theta`` are in degrees.
    """

    experiment: str = "local-power"
    q: tuple | None = None
    n: tuple | None = None
    M: int = 2000
    m: int = 100_000
    alpha: float = 0.05
    alphas: tuple | None = None
    a: tuple = (-1.0, 0.0, 1.0)
    K: int | None = None
    f_id: str = "vmf"
    nu: float = 0.25
    ell: tuple | None = None
    tau: tuple | None = None
    theta: tuple | None = None
    folds: int = 10
    fold_grid: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    calibration: str = "asymptotic"
    method: str = "exact"
    tail_tol: float = DEFAULT_TAIL_TOL
    theory_m: int = 100_000
    seed: int = 0
    out: str | None = None
    cache: str | None = None
    max_seconds: float = 3600.0
    keys: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        for name in _LIST_KEYS:
            val = getattr(self, name)
            if val is not None and not isinstance(val, tuple):
                object.__setattr__(self, name, tuple(val) if isinstance(val, (list, np.ndarray)) else (val,))
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.M < 100:
            raise ValueError("M must be >= 100")
        if self.m < 100:
            raise ValueError("m must be >= 100")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for al in self.alphas or ():
            if not 0.0 < al < 1.0:
                raise ValueError("alphas must lie in (0, 1)")
        for q in self.q or ():
            if int(q) != q or q < 2:
                raise ValueError(f"q must be an integer >= 2, got {q}")
        for n in self.n or ():
            if int(n) != n or n < 2:
                raise ValueError(f"n must be an integer >= 2, got {n}")
        for a in tuple(self.a) + tuple(self.fold_grid):
            if not -1.0 <= a <= 1.0:
                raise ValueError(f"a must lie in [-1, 1], got {a}")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")
        if self.f_id not in ANGULAR_FUNCTIONS:
            raise ValueError(f"f_id must be one of {sorted(ANGULAR_FUNCTIONS)}")
        for ell in self.ell or ():
            if int(ell) != ell or ell < 1:
                raise ValueError(f"ell must be a positive integer, got {ell}")
        for tau in self.tau or ():
            if tau < 0:
                raise ValueError("tau must be >= 0")
        for th in self.theta or ():
            if not 0.0 < th <= 180.0:
                raise ValueError("theta must lie in (0, 180] degrees")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.calibration not in ("asymptotic", "exact"):
            raise ValueError("calibration must be 'asymptotic' or 'exact'")
        if self.method not in ("asymptotic", "exact"):
            raise ValueError("method must be 'asymptotic' or 'exact'")

    def resolved(self) -> "ExperimentConfig":
        """Copy with experiment defaults filled in for unset list keys."""
        updates = {k: tuple(v) for k, v in _DEFAULTS[self.experiment].items() if getattr(self, k) is None}
        return replace(self, **updates) if updates else self

    # key=value text form

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        """Parse ``key = value`` lines; repeated keys (or comma lists) build lists."""
        known = {f.name: f for f in fields(cls) if f.name != "keys"}
        values: dict = {}
        order: list = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            if key not in order:
                order.append(key)
            if key in _LIST_KEYS:
                values.setdefault(key, []).extend(_as_number(v.strip()) for v in val.split(",") if v.strip())
            elif key in values:
                raise ValueError(f"line {lineno}: key {key!r} repeated but takes a single value")
            else:
                values[key] = val
        kwargs = {}
        for key, val in values.items():
            default = known[key].default
            if key in _LIST_KEYS:
                kwargs[key] = tuple(float(v) if key in ("a", "tau", "theta", "fold_grid", "alphas") else int(v)
                                    for v in val)
            elif key in ("out", "cache"):
                kwargs[key] = val
            elif isinstance(default, bool):
                kwargs[key] = val.lower() in ("1", "true", "yes")
            elif isinstance(default, int) or key == "K":
                kwargs[key] = int(val)
            elif isinstance(default, float):
                kwargs[key] = float(val)
            else:
                kwargs[key] = val
        return cls(keys=tuple(order), **kwargs)

    def to_text(self) -> str:
        """Inverse of ``parse``: keys in their original order, or all set keys."""
        names = self.keys or tuple(f.name for f in fields(self) if f.name != "keys")
        lines = []
        for name in names:
            val = getattr(self, name)
            if val is None:
                continue
            if name in _LIST_KEYS:
                lines.extend(f"{name} = {_fmt(v)}" for v in val)
            else:
                lines.append(f"{name} = {_fmt(val)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.parse(Path(path).read_text())


# --- statistics per experiment --------------------------------------------------------


def power_stats(cfg: ExperimentConfig, q: int) -> list[StatSpec]:
    """Rayleigh, Bingham and T_n(a) for each ``a`` in the grid:
    truncated at K (default 6) for q = 2, untruncated for q >= 3."""
    out = [StatSpec("rayleigh"), StatSpec("bingham")]
    out += [StatSpec.tn(a, (cfg.K or POWER_K) if q == 2 else None) for a in cfg.a]
    return out


def uad_stats(cfg: ExperimentConfig) -> list[StatSpec]:
    return [StatSpec("rayleigh"), StatSpec("bingham")] + [StatSpec.tn(a) for a in cfg.a]


def _k_v(stat: StatSpec) -> int:
    if stat.kind == "rayleigh":
        return 1
    if stat.kind == "bingham":
        return 2
    return 1 + int(stat.a == 1)


# --- cells ---------------------------------------------------------------------------


def cell_keys(cfg: ExperimentConfig) -> list[str]:
    cfg = cfg.resolved()
    if cfg.experiment == "local-power":
        return [f"power/q={q}/n={n}/ell={ell}/tau={_fmt(float(tau))}"
                for q in cfg.q for n in cfg.n for ell in cfg.ell for tau in cfg.tau]
    if cfg.experiment == "uad-table":
        return [f"uad/q={q}/n={n}/theta={_fmt(float(th))}" for q in cfg.q for n in cfg.n for th in cfg.theta]
    return [f"critval/q={q}/n={n}/a={_fmt(float(a))}" for q in cfg.q for n in cfg.n for a in cfg.a]


def _parse_key(key: str) -> dict:
    parts = key.split("/")
    out = {"kind": parts[0]}
    for part in parts[1:]:
        name, val = part.split("=", 1)
        out[name] = _as_number(val)
    return out


def _cache(cfg):
    return NullCache(cfg.cache) if cfg.cache else None


class _Context:
    """Null models shared by the cells of one run, built lazily."""

    def __init__(self, cfg: ExperimentConfig, threads: int = 1):
        self.cfg = cfg
        self.cache = _cache(cfg)
        self.threads = threads
        self._models: dict = {}

    def exact(self, stats, q, n):
        missing = [s for s in stats if ("exact", s, q, n) not in self._models]
        if missing:
            got = exact_models(missing, q, n, self.cfg.m, self.cfg.seed, self.cache, self.threads)
            for s, model in got.items():
                self._models[("exact", s, q, n)] = model
        return {s: self._models[("exact", s, q, n)] for s in stats}

    def asymptotic(self, stat, q):
        key = ("asymptotic", stat, q)
        if key not in self._models:
            self._models[key] = asymptotic_model(stat, q, self.cfg.m, self.cfg.seed, self.cache,
                                                 self.cfg.tail_tol)
        return self._models[key]

    def models(self, stats, q, n, method):
        if method == "exact":
            return self.exact(stats, q, n)
        return {s: self.asymptotic(s, q) for s in stats}


def _rate_fields(count: int, M: int) -> dict:
    p = count / M
    return {"reject_pct": round(100.0 * p, 4), "se_pct": round(100.0 * math.sqrt(p * (1.0 - p) / M), 4)}


def _power_cell(cfg, key, ctx) -> list[dict]:
    par = _parse_key(key)
    q, n, ell, tau = par["q"], par["n"], par["ell"], float(par["tau"])
    kappa = n ** (-1.0 / ell) * tau
    stats = power_stats(cfg, q)
    models = ctx.models(stats, q, n, cfg.calibration)
    crit = {s: models[s].critical_value(cfg.alpha) for s in stats}
    stream = RandomStream(cfg.seed).substream(key)
    spec = RotSymSpec(north_pole(q), kappa, cfg.f_id, cfg.nu)
    counts = {s: 0 for s in stats}
    for i, lo in enumerate(range(0, cfg.M, CELL_CHUNK)):
        size = min(CELL_CHUNK, cfg.M - lo)
        X = rotsym_batch(spec, q, n, size, stream.substream(f"chunk{i}"))
        vals = evaluate_batch(X, stats)
        for s in stats:
            counts[s] += int(np.sum(vals[s] > crit[s]))
    rows = []
    for s in stats:
        theory = ""
        if ell == 2 * _k_v(s):
            alt = LocalAlternative(cfg.f_id, tau, _k_v(s), cfg.nu)
            theory = round(100.0 * asymptotic_power(s, q, alt, cfg.alpha, cfg.theory_m,
                                                    stream.substream(f"theory/{s.label}")), 4)
        rows.append({
            "test": s.display, "q": q, "n": n, "f_id": cfg.f_id, "ell": ell, "tau": tau,
            "kappa": kappa, "M": cfg.M, "rejections": counts[s], **_rate_fields(counts[s], cfg.M),
            "theory_pct": theory, "critical_value": crit[s], "calibration": cfg.calibration,
            "seed": cfg.seed, "cell": key,
        })
    return rows


def _uad_cell(cfg, key, ctx) -> list[dict]:
    par = _parse_key(key)
    q, n, theta = par["q"], par["n"], float(par["theta"])
    stats = uad_stats(cfg)
    models = ctx.exact(stats, q, n)
    crit = {s: models[s].critical_value(cfg.alpha) for s in stats}
    grid = sorted(set(cfg.fold_grid))
    fold_stats = [StatSpec.tn(a) for a in grid]

    def p_value_fn(a, size, values):
        return ctx.exact(fold_stats, q, size)[StatSpec.tn(a)].p_value(values)

    stream = RandomStream(cfg.seed).substream(key)
    counts = {s.display: 0 for s in stats}
    kf_name = f"T_n^({cfg.folds})"
    counts[kf_name] = 0
    for i, lo in enumerate(range(0, cfg.M, CELL_CHUNK)):
        size = min(CELL_CHUNK, cfg.M - lo)
        X = uad_batch(q, n, math.radians(theta), size, stream.substream(f"chunk{i}"))
        vals = evaluate_batch(X, stats)
        for s in stats:
            counts[s.display] += int(np.sum(vals[s] > crit[s]))
        kf = kfold_batch(X, cfg.folds, grid, p_value_fn, stream.substream(f"folds{i}"), alpha=cfg.alpha)
        counts[kf_name] += int(np.sum(kf["reject"]))
    order = ["Rayleigh", "Bingham", kf_name] + [s.display for s in stats[2:]]
    row = {"q": q, "n": n, "theta_deg": theta, "M": cfg.M}
    for name in order:
        rate = _rate_fields(counts[name], cfg.M)
        row[name] = rate["reject_pct"]
        row[f"{name} se"] = rate["se_pct"]
    row.update({"seed": cfg.seed, "cell": key})
    return [row]


def _critval_cell(cfg, key, ctx) -> list[dict]:
    par = _parse_key(key)
    q, n, a = par["q"], par["n"], float(par["a"])
    stat = StatSpec.tn(a, cfg.K)
    if cfg.method == "asymptotic" and stat.kind == "tn" and q == 2:
        raise ValueError("no asymptotic null distribution for the untruncated statistic on S^2")
    model = ctx.models([stat], q, n, cfg.method)[stat]
    rows = []
    for al in sorted(cfg.alphas or (cfg.alpha,), reverse=True):
        rows.append({
            "test": stat.display, "q": q, "n": n if cfg.method == "exact" else "", "a": a,
            "K": model.size if cfg.method == "asymptotic" else (stat.K or ""), "method": model.method,
            "alpha": al, "critical_value": model.critical_value(al), "m": model.m,
            "tail_var_bound": model.tail_var_bound, "seed": cfg.seed, "cell": key,
        })
    return rows


_CELL_RUNNERS = {"power": _power_cell, "uad": _uad_cell, "critval": _critval_cell}


def run_cell(cfg: ExperimentConfig, key: str, ctx: _Context | None = None) -> list[dict]:
    """Rows of one cell; depends only on (cfg, key)."""
    cfg = cfg.resolved()
    ctx = ctx or _Context(cfg)
    return _CELL_RUNNERS[_parse_key(key)["kind"]](cfg, key, ctx)


# --- budget ------------------------------------------------------------------------


def estimate_seconds(cfg: ExperimentConfig) -> float:
    """Rough single-core run time, dominated by pairwise work."""
    cfg = cfg.resolved()
    pairs = lambda n: n * (n - 1) / 2.0  # noqa: E731
    total = 0.0
    if cfg.experiment == "local-power":
        cells = len(cfg.ell) * len(cfg.tau)
        for q in cfg.q:
            for n in cfg.n:
                total += cells * cfg.M * pairs(n) * PAIR_COST
                if cfg.calibration == "exact":
                    total += cfg.m * pairs(n) * PAIR_COST
            if cfg.calibration == "asymptotic" and q > 2:
                total += len(cfg.a) * cfg.m * 3e-8 * 1000
    elif cfg.experiment == "uad-table":
        for q in cfg.q:
            for n in cfg.n:
                total += len(cfg.theta) * cfg.M * pairs(n) * PAIR_COST * 3.0
                total += cfg.m * pairs(n) * PAIR_COST
                total += cfg.m * pairs(max(2, n // cfg.folds)) * PAIR_COST
    else:
        for q in cfg.q:
            for n in cfg.n:
                total += cfg.m * (pairs(n) * PAIR_COST if cfg.method == "exact" else 3e-5)
    return total


def run_experiment(cfg: ExperimentConfig, threads: int = 1, keys: Iterable[str] | None = None,
                   progress=None) -> list[dict]:
    """Run all (or the selected) cells and return their rows in key order."""
    cfg = cfg.resolved()
    est = estimate_seconds(cfg)
    if est > cfg.max_seconds:
        raise InfeasibleError(
            f"estimated run time {est:.0f} s exceeds max_seconds = {cfg.max_seconds:g}; "
            "reduce M, m, n or the grids, or raise max_seconds"
        )
    all_keys = cell_keys(cfg)
    keys = all_keys if keys is None else [k for k in all_keys if k in set(keys)]
    ctx = _Context(cfg, threads)
    # shared null models are built up front so workers only read them
    for key in keys:
        _warm(cfg, key, ctx)

    def work(key):
        t0 = time.perf_counter()
        rows = run_cell(cfg, key, ctx)
        if progress:
            progress(f"{key}: {time.perf_counter() - t0:.1f} s")
        return key, rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = dict(pool.map(work, keys))
    else:
        done = dict(work(k) for k in keys)
    return [row for key in keys for row in done[key]]


def _warm(cfg, key, ctx):
    par = _parse_key(key)
    q, n = par["q"], par["n"]
    if par["kind"] == "power":
        ctx.models(power_stats(cfg, q), q, n, cfg.calibration)
    elif par["kind"] == "uad":
        ctx.exact(uad_stats(cfg), q, n)
        m = n // cfg.folds
        sizes = {m, m + 1} if n % cfg.folds else {m}
        for size in sizes:
            ctx.exact([StatSpec.tn(a) for a in sorted(set(cfg.fold_grid))], q, size)


def write_rows(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(dict.fromkeys(k for row in rows for k in row))
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        writer.writerows(rows)
    return path
