"""Calibration of the uniformity tests.

Null and local-alternative reference distributions are represented by Monte
Carlo draws held in a ``NullModel``:

* asymptotic series draws of sum_k w_k (Y_k - d_k), Y_k ~ chi2(d_k), with the
  k_v-th term made noncentral under a local alternative;
* exact-n draws of a statistic on fresh uniform samples of size n.

Exact-n replicates are generated in fixed-size chunks, each with its own
substream, so the draws depend only on (seed, chunk index) and never on the
number of worker threads.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sstats

from .coefficients import (
    CoefficientTable,
    KernelSpec,
    build_table,
    harmonic_dim,
    series_variance,
    tail_variance,
)
from .rng import RandomStream, as_stream
from .samplers import DEFAULT_NU, uniform_batch
from .statistics import StatSpec, TestReport, evaluate, evaluate_batch

__all__ = [
    "CalibrationWarning",
    "NullModel",
    "LocalAlternative",
    "derivatives_at_zero",
    "noncentrality",
    "sample_null_asymptotic",
    "sample_null_exact",
    "sample_null_exact_many",
    "sample_alt_asymptotic",
    "asymptotic_null",
    "asymptotic_power",
    "p_value",
    "critical_value",
    "NullCache",
    "run_test",
]

EXACT_CHUNK = 1000
DEFAULT_TAIL_TOL = 1e-4


class CalibrationWarning(UserWarning):
    """Too few Monte Carlo draws for the requested level."""


@dataclass(frozen=True)
class NullModel:
    """Sorted reference draws of a statistic.

    ``kind`` is ``"asymptotic"`` (series simulation) or ``"exact"`` (exact-n
    Monte Carlo); ``size`` is the truncation level actually simulated for the
    former and the sample size n for the latter.
    """

    kind: str
    stat: StatSpec
    q: int
    draws: np.ndarray
    size: int
    seed: int | None = None
    tail_var_bound: float = 0.0
    stream: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.sort(np.asarray(self.draws, dtype=float))
        arr.setflags(write=False)
        object.__setattr__(self, "draws", arr)

    @property
    def m(self) -> int:
        return self.draws.size

    @property
    def K_used(self) -> int:
        return self.size

    @property
    def spec(self) -> KernelSpec | None:
        if self.stat.kind in ("tn", "tnk"):
            return self.stat.kernel(self.q)
        return None

    def p_value(self, t):
        """Add-one Monte Carlo p-value (1 + #{draws >= t}) / (m + 1)."""
        t = np.asarray(t, dtype=float)
        exceed = self.m - np.searchsorted(self.draws, t, side="left")
        out = (1.0 + exceed) / (self.m + 1.0)
        return float(out) if out.ndim == 0 else out

    def critical_value(self, alpha: float) -> float:
        """Upper-alpha quantile: order statistic ceil((1 - alpha)(m + 1))."""
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if alpha * self.m < 10:
            warnings.warn(
                f"only {self.m} draws for alpha = {alpha:g}; the critical value is unreliable",
                CalibrationWarning,
                stacklevel=2,
            )
        r = math.ceil((1.0 - alpha) * (self.m + 1) - 1e-9)
        r = min(max(r, 1), self.m)
        return float(self.draws[r - 1])

    def quantile(self, prob: float) -> float:
        return float(np.quantile(self.draws, prob))

    @property
    def method(self) -> str:
        return "asymptotic" if self.kind == "asymptotic" else f"exact-n MC (n={self.size})"


def p_value(model: NullModel, t):
    return model.p_value(t)


def critical_value(model: NullModel, alpha: float) -> float:
    return model.critical_value(alpha)


# --- local alternatives --------------------------------------------------------


def _hermite(k: int, x: float) -> float:
    # physicists' Hermite polynomial by recurrence
    h_prev, h = 1.0, 2.0 * x
    if k == 0:
        return h_prev
    for j in range(1, k):
        h_prev, h = h, 2.0 * x * h - 2.0 * j * h_prev
    return h


def derivatives_at_zero(f_id: str, max_order: int = 6, nu: float = DEFAULT_NU) -> np.ndarray:
    """f^{(k)}(0), k = 0..max_order, for the named angular functions.

    The small-circle function is taken as exp(-(s - nu)^2 + nu^2) so that
    f(0) = 1; its derivatives at zero are the Hermite values H_k(nu).
    """
    ks = np.arange(max_order + 1)
    if f_id == "vmf":
        return np.ones(max_order + 1)
    if f_id == "mixvmf":
        return (ks % 2 == 0).astype(float)
    if f_id == "smallcircle":
        return np.array([_hermite(int(k), nu) for k in ks])
    raise ValueError(f"unknown angular function {f_id!r}")


@dataclass(frozen=True)
class LocalAlternative:
    """Angular function ``f_id``, local parameter ``tau`` and the index ``k_v``
    of the harmonic that carries the noncentrality."""

    f_id: str
    tau: float
    k_v: int = 1
    nu: float = DEFAULT_NU
    max_order: int = 6
    derivatives: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if self.k_v < 1:
            raise ValueError("k_v must be >= 1")
        if self.derivatives is None:
            object.__setattr__(self, "derivatives", derivatives_at_zero(self.f_id, self.max_order, self.nu))
        if abs(self.derivatives[0] - 1.0) > 1e-12:
            raise ValueError("angular functions must satisfy f(0) = 1")

    @classmethod
    def for_kernel(cls, f_id: str, tau: float, a: float, **kw) -> "LocalAlternative":
        """k_v = 1 + [a = 1]: the lowest harmonic with nonzero weight."""
        return cls(f_id, tau, k_v=1 + int(a == 1), **kw)


def noncentrality(alt: LocalAlternative, k: int, q: int) -> float:
    """xi_{k,q}(tau) = d_{k,q} f^{(k)}(0)^2 tau^{2k} / prod_{l<k} (2l + q + 1)^2."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= len(alt.derivatives):
        raise ValueError(f"derivative of order {k} not available (stored up to {len(alt.derivatives) - 1})")
    denom = 1
    for ell in range(k):
        denom *= (2 * ell + q + 1) ** 2
    return harmonic_dim(k, q) * float(alt.derivatives[k]) ** 2 * alt.tau ** (2 * k) / denom


# --- asymptotic series ---------------------------------------------------------


def _choose_k(table: CoefficientTable, tail_tol: float) -> int:
    total = series_variance(table)
    stop = table.effective_k()
    contrib = 2.0 * table.w[1 : stop + 1] ** 2 * table.d[1 : stop + 1]
    # tail after k = total - cumulative contribution up to k
    remaining = total - np.cumsum(contrib)
    ok = np.flatnonzero(remaining <= tail_tol * total)
    return int(ok[0] + 1) if ok.size else stop


def _series_draws(table: CoefficientTable, K: int, m: int, gen, ncp_term: tuple[int, float] | None,
                  tail_var: float) -> np.ndarray:
    acc = np.zeros(m)
    for k in range(1, K + 1):
        wk = float(table.w[k])
        if wk == 0.0:
            continue
        dk = int(table.d[k])
        if ncp_term is not None and ncp_term[0] == k and ncp_term[1] > 0:
            y = gen.noncentral_chisquare(dk, ncp_term[1], size=m)
        else:
            y = gen.chisquare(dk, size=m)
        acc += wk * (y - dk)
    if tail_var > 0:
        acc += math.sqrt(tail_var) * gen.standard_normal(m)
    return acc


def _resolve_series(table: CoefficientTable, K: int | None, tail_tol: float):
    spec = table.spec
    if spec.truncated:
        K_use = spec.K if K is None else min(K, spec.K)
        if K_use > table.k_max:
            raise ValueError(f"table holds k <= {table.k_max}, truncation needs {K_use}")
        return K_use, tail_variance(table, K_use)
    if table.q == 2:
        raise ValueError(
            "the untruncated statistic has no asymptotic null distribution on S^2 "
            "(the kernel is not square integrable); use a truncated statistic or exact-n calibration"
        )
    K_use = _choose_k(table, tail_tol) if K is None else K
    if K_use > table.k_max:
        raise ValueError(f"K = {K_use} exceeds the table size {table.k_max}")
    return K_use, tail_variance(table, K_use)


def sample_null_asymptotic(table: CoefficientTable, m: int, rng=None, K: int | None = None,
                           tail_tol: float = DEFAULT_TAIL_TOL, gaussian_tail: bool = True) -> NullModel:
    """Draws from the limiting null law sum_{k>=1} w_k (Y_k - d_k).

    Truncated kernels use their K exactly (valid for any q >= 2). For the
    untruncated statistic (q >= 3) the series is simulated term by term up to
    the smallest K whose omitted variance is at most ``tail_tol`` times the
    total, capped at the table size; the omitted part, a sum of many tiny
    independent centered terms, is added as a normal variate with the same
    variance (``gaussian_tail``).
    """
    stream = as_stream(rng)
    K_use, tail_var = _resolve_series(table, K, tail_tol)
    draws = _series_draws(table, K_use, m, stream.generator, None, tail_var if gaussian_tail else 0.0)
    spec = table.spec
    return NullModel("asymptotic", StatSpec.tn(spec.a, spec.K), spec.q, draws, K_use, stream.seed,
                     tail_var, stream.key)


def sample_alt_asymptotic(table: CoefficientTable, alt: LocalAlternative, m: int, rng=None,
                          K: int | None = None, tail_tol: float = DEFAULT_TAIL_TOL,
                          gaussian_tail: bool = True) -> NullModel:
    """Draws from the local-alternative limit: the k_v term of the null series
    becomes chi2(d_{k_v}, xi_{k_v,q}(tau))."""
    stream = as_stream(rng)
    K_use, tail_var = _resolve_series(table, K, tail_tol)
    if K_use < alt.k_v:
        raise ValueError(f"truncation K = {K_use} must be >= k_v = {alt.k_v}")
    xi = noncentrality(alt, alt.k_v, table.q)
    draws = _series_draws(table, K_use, m, stream.generator, (alt.k_v, xi),
                          tail_var if gaussian_tail else 0.0)
    spec = table.spec
    return NullModel("asymptotic-alt", StatSpec.tn(spec.a, spec.K), spec.q, draws, K_use, stream.seed,
                     tail_var, stream.key, {"xi": xi, "k_v": alt.k_v, "tau": alt.tau, "f_id": alt.f_id})


def _baseline_dof(stat: StatSpec, q: int) -> tuple[int, int]:
    # (harmonic order, dof) of the chi-square limit of Rayleigh / Bingham
    if stat.kind == "rayleigh":
        return 1, harmonic_dim(1, q)
    if stat.kind == "bingham":
        return 2, harmonic_dim(2, q)
    raise ValueError(f"{stat.display} has no chi-square baseline limit")


def asymptotic_null(stat: StatSpec, q: int, m: int, rng=None, K_max: int = 1000,
                    tail_tol: float = DEFAULT_TAIL_TOL) -> NullModel:
    """Asymptotic null draws for any supported statistic."""
    stream = as_stream(rng)
    if stat.kind in ("rayleigh", "bingham"):
        _, dof = _baseline_dof(stat, q)
        draws = stream.generator.chisquare(dof, size=m)
        return NullModel("asymptotic", stat, q, draws, 1, stream.seed, 0.0, stream.key)
    if stat.kind == "pn":
        raise ValueError("P_n is not centered; use T_n(0) for asymptotic calibration")
    spec = stat.kernel(q)
    table = build_table(spec, max(K_max, spec.K or 1))
    return sample_null_asymptotic(table, m, stream, tail_tol=tail_tol)


def asymptotic_power(stat: StatSpec, q: int, alt: LocalAlternative, alpha: float = 0.05, m: int = 100_000,
                     rng=None, K_max: int = 1000) -> float:
    """Limiting rejection probability at the detection threshold of ``stat``.

    For T_n(a) / T_{n,K}(a) the null and alternative series are simulated;
    for Rayleigh and Bingham the chi-square limits are exact.
    """
    stream = as_stream(rng)
    if stat.kind in ("rayleigh", "bingham"):
        order, dof = _baseline_dof(stat, q)
        xi = noncentrality(alt, order, q)
        crit = sstats.chi2.ppf(1.0 - alpha, dof)
        return float(sstats.ncx2.sf(crit, dof, xi)) if xi > 0 else float(alpha)
    spec = stat.kernel(q)
    table = build_table(spec, max(K_max, spec.K or 1))
    null = sample_null_asymptotic(table, m, stream.substream("null"))
    alt_draws = sample_alt_asymptotic(table, alt, m, stream.substream("alt"))
    crit = null.critical_value(alpha)
    return float(np.mean(alt_draws.draws > crit))


# --- exact-n Monte Carlo -------------------------------------------------------


def sample_null_exact_many(stats: Sequence[StatSpec], q: int, n: int, m: int, rng=None,
                           threads: int = 1, chunk: int = EXACT_CHUNK) -> dict:
    """Exact-n null draws of several statistics from shared uniform samples.

    Chunk i of ``chunk`` replicates uses substream ``chunk{i}``; results do
    not depend on ``threads``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    stream = as_stream(rng)
    stats = list(dict.fromkeys(stats))
    bounds = [(lo, min(m, lo + chunk)) for lo in range(0, m, chunk)]

    def work(i):
        lo, hi = bounds[i]
        X = uniform_batch(q, n, hi - lo, stream.substream(f"chunk{i}"))
        return evaluate_batch(X, stats)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(bounds))))
    else:
        parts = [work(i) for i in range(len(bounds))]
    out = {}
    for s in stats:
        draws = np.concatenate([part[s] for part in parts]) if parts else np.empty(0)
        out[s] = NullModel("exact", s, q, draws, n, stream.seed, 0.0, stream.key)
    return out


def sample_null_exact(spec: KernelSpec | StatSpec, n: int, m: int, rng=None, q: int | None = None,
                      threads: int = 1) -> NullModel:
    """Exact-n null draws of one statistic (``KernelSpec`` means T_n(a) or T_{n,K}(a))."""
    if isinstance(spec, KernelSpec):
        stat, q = StatSpec.tn(spec.a, spec.K), spec.q
    else:
        stat = spec
        if q is None:
            raise ValueError("q is required for baseline statistics")
    return sample_null_exact_many([stat], q, n, m, rng, threads=threads)[stat]


# --- cache ----------------------------------------------------------------------


class NullCache:
    """Directory of cached null models.

    Layout ``<root>/<kind>/<q>_<stat>_<n or K>_<m>_<seed>.bin``: raw
    little-endian float64 sorted draws, with a ``.json`` sidecar holding the
    remaining fields.
    """

    def __init__(self, root):
        self.root = Path(root)

    def path(self, kind: str, q: int, stat: StatSpec, size_token: str, m: int, seed: int) -> Path:
        return self.root / kind / f"{q}_{stat.label}_{size_token}_{m}_{seed}.bin"

    def load(self, path: Path) -> NullModel | None:
        meta_path = path.with_suffix(".json")
        if not (path.exists() and meta_path.exists()):
            return None
        meta = json.loads(meta_path.read_text())
        draws = np.fromfile(path, dtype="<f8")
        if draws.size != meta["m"]:
            return None
        return NullModel(meta["kind"], StatSpec.parse(meta["stat"]), meta["q"], draws, meta["size"],
                         meta["seed"], meta["tail_var_bound"], meta.get("stream", ""), meta.get("extra", {}))

    def save(self, path: Path, model: NullModel) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        model.draws.astype("<f8").tofile(path)
        meta = {
            "kind": model.kind, "stat": model.stat.label, "q": model.q, "size": model.size,
            "m": model.m, "seed": model.seed, "tail_var_bound": model.tail_var_bound,
            "stream": model.stream, "extra": model.extra,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True))
        return path

    def exact_many(self, stats: Sequence[StatSpec], q: int, n: int, m: int, seed: int,
                   threads: int = 1) -> dict:
        """Exact-n models for ``stats``, computing (jointly) only the missing ones.

        Draws come from substream ``null/exact/q<q>/n<n>`` of ``seed``, so a
        model is the same whichever other statistics it is computed with.
        """
        out, missing = {}, []
        for s in stats:
            model = self.load(self.path("exact", q, s, f"n{n}", m, seed))
            if model is None:
                missing.append(s)
            else:
                out[s] = model
        if missing:
            stream = RandomStream(seed).substream(f"null/exact/q{q}/n{n}")
            fresh = sample_null_exact_many(missing, q, n, m, stream, threads=threads)
            for s, model in fresh.items():
                self.save(self.path("exact", q, s, f"n{n}", m, seed), model)
                out[s] = model
        return out

    def asymptotic(self, stat: StatSpec, q: int, m: int, seed: int, tail_tol: float = DEFAULT_TAIL_TOL) -> NullModel:
        token = f"K{stat.K}" if stat.kind == "tnk" else f"tol{tail_tol:g}"
        path = self.path("asymptotic", q, stat, token, m, seed)
        model = self.load(path)
        if model is None:
            stream = RandomStream(seed).substream(f"null/asymptotic/q{q}/{stat.label}")
            model = asymptotic_null(stat, q, m, stream, tail_tol=tail_tol)
            self.save(path, model)
        return model


def exact_models(stats: Sequence[StatSpec], q: int, n: int, m: int, seed: int,
                 cache: NullCache | None = None, threads: int = 1) -> dict:
    """Exact-n null models keyed by statistic, from the cache when given."""
    if cache is not None:
        return cache.exact_many(stats, q, n, m, seed, threads=threads)
    stream = RandomStream(seed).substream(f"null/exact/q{q}/n{n}")
    return sample_null_exact_many(stats, q, n, m, stream, threads=threads)


def asymptotic_model(stat: StatSpec, q: int, m: int, seed: int, cache: NullCache | None = None,
                     tail_tol: float = DEFAULT_TAIL_TOL) -> NullModel:
    if cache is not None:
        return cache.asymptotic(stat, q, m, seed, tail_tol)
    stream = RandomStream(seed).substream(f"null/asymptotic/q{q}/{stat.label}")
    return asymptotic_null(stat, q, m, stream, tail_tol=tail_tol)


# --- one-shot test --------------------------------------------------------------


def run_test(sample, stat: StatSpec, method: str = "exact", alpha: float = 0.05, m: int = 100_000,
             seed: int = 0, cache: NullCache | None = None, threads: int = 1) -> TestReport:
    """Evaluate ``stat`` on ``sample`` and calibrate it.

    ``method`` is ``"exact"`` (exact-n Monte Carlo) or ``"asymptotic"``.
    """
    points = getattr(sample, "points", sample)
    points = np.asarray(points, dtype=float)
    n, q = points.shape[0], points.shape[1] - 1
    value = evaluate(points, stat)
    if method == "exact":
        model = exact_models([stat], q, n, m, seed, cache, threads)[stat]
    elif method == "asymptotic":
        if stat.kind == "tn" and q == 2:
            raise ValueError(
                "asymptotic calibration of the untruncated statistic is unavailable on S^2; "
                "use --K for the truncated statistic or method 'exact'"
            )
        model = asymptotic_model(stat, q, m, seed, cache)
    else:
        raise ValueError(f"unknown calibration method {method!r}")
    crit = model.critical_value(alpha)
    return TestReport(
        statistic=value,
        stat=stat,
        method=model.method,
        critical_value=crit,
        p_value=model.p_value(value),
        reject=bool(value > crit),
        alpha=alpha,
        seed=seed,
        n=n,
        q=q,
        details={"m": model.m, "stream": model.stream},
    )
