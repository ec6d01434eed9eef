"""Test statistics for uniformity on S^q.

The stereographic statistics are U-statistics over pairwise angles:

    T_n(a)   = (2/n) sum_{i<j} psi(theta_ij; a) - (n - 1) E_H0[psi]
    P_n      = (2/n) sum_{i<j} cot(theta_ij / 2)
    T_{n,K}(a) uses the degree-K Gegenbauer truncation of psi.

Everything is computed from cosines c = X_i'X_j with the half-angle
identities cot(theta/2) = sqrt((1 + c)/(1 - c)), tan(theta/2) = sqrt((1 - c)/(1 + c)),
so no trigonometric calls are needed and an antipodal pair gives cot = 0.
The ``batch_*`` and ``evaluate_batch`` functions work on arrays of shape
``(B, n, q+1)`` and share the pairwise work across statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .coefficients import KernelSpec, build_table, expected_h0
from .rng import RandomStream, as_stream
from .sample import SphericalSample
from .special import gegenbauer_all

__all__ = [
    "TIE_TOL",
    "TieError",
    "StatSpec",
    "PairwiseAngles",
    "TestReport",
    "kernel_psi",
    "pairwise_angles",
    "stat_pn",
    "stat_tn",
    "stat_tnk",
    "stat_rayleigh",
    "stat_bingham",
    "stat_kfold",
    "evaluate",
    "evaluate_batch",
    "assign_folds",
    "kfold_batch",
]

TIE_TOL = 1e-14


class TieError(ValueError):
    """A pair of observations where the kernel is singular."""

    def __init__(self, i: int, j: int, kind: str):
        self.i, self.j, self.kind = i, j, kind
        super().__init__(
            f"observations {i} and {j} are {kind}; the statistic is not defined in the presence of ties"
        )


@dataclass(frozen=True)
class StatSpec:
    """Which statistic: ``tn`` (T_n(a)), ``tnk`` (T_{n,K}(a)), ``pn``,
    ``rayleigh`` or ``bingham``."""

    kind: str
    a: float | None = None
    K: int | None = None

    def __post_init__(self):
        if self.kind not in ("tn", "tnk", "pn", "rayleigh", "bingham"):
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        if self.kind in ("tn", "tnk"):
            if self.a is None or not -1.0 <= self.a <= 1.0:
                raise ValueError("stereographic statistics need a in [-1, 1]")
            object.__setattr__(self, "a", float(self.a))
        if self.kind == "tnk" and (self.K is None or self.K < 1):
            raise ValueError("truncated statistic needs K >= 1")

    @classmethod
    def tn(cls, a: float, K: int | None = None) -> "StatSpec":
        return cls("tn", a) if K is None else cls("tnk", a, K)

    def kernel(self, q: int) -> KernelSpec:
        return KernelSpec(self.a, q, self.K if self.kind == "tnk" else None)

    @property
    def label(self) -> str:
        """Filename-safe identifier."""
        if self.kind == "tn":
            return f"tn_a{self.a:g}"
        if self.kind == "tnk":
            return f"tnk{self.K}_a{self.a:g}"
        return self.kind

    @property
    def display(self) -> str:
        if self.kind == "tn":
            return f"T_n({self.a:g})"
        if self.kind == "tnk":
            return f"T_n,{self.K}({self.a:g})"
        return {"pn": "P_n", "rayleigh": "Rayleigh", "bingham": "Bingham"}[self.kind]

    @classmethod
    def parse(cls, text: str) -> "StatSpec":
        """Inverse of ``label``; also accepts ``tn:0.5`` / ``tnk6:1``."""
        text = text.strip().lower()
        if text in ("pn", "rayleigh", "bingham"):
            return cls(text)
        for sep in ("_a", ":"):
            if sep in text:
                head, a = text.split(sep, 1)
                if head == "tn":
                    return cls("tn", float(a))
                if head.startswith("tnk"):
                    return cls("tnk", float(a), int(head[3:]))
        raise ValueError(f"cannot parse statistic {text!r}")


@dataclass(frozen=True)
class PairwiseAngles:
    """Pair indices (i < j) and their angles theta_ij in [0, pi]."""

    i: np.ndarray
    j: np.ndarray
    theta: np.ndarray


@dataclass
class TestReport:
    """Outcome of a uniformity test.

    For ordinary statistics ``reject`` is ``statistic > critical_value``,
    which for Monte Carlo calibration is equivalent to ``p_value <= alpha``.
    For the K-fold test ``statistic`` is the smallest fold p-value,
    ``critical_value`` is alpha / folds and ``p_value`` the Bonferroni-adjusted
    p-value.
    """

    __test__ = False  # not a pytest class

    statistic: float
    stat: StatSpec | str
    method: str
    critical_value: float
    p_value: float
    reject: bool
    alpha: float
    seed: int | None
    n: int
    q: int
    details: dict = field(default_factory=dict)

    def summary(self) -> str:
        name = self.stat.display if isinstance(self.stat, StatSpec) else str(self.stat)
        return (
            f"statistic     {name} = {self.statistic:.10g}\n"
            f"calibration   {self.method}\n"
            f"critical      {self.critical_value:.10g} (alpha = {self.alpha:g})\n"
            f"p-value       {self.p_value:.6g}\n"
            f"decision      {'reject' if self.reject else 'do not reject'} uniformity\n"
            f"n, q, seed    {self.n}, {self.q}, {self.seed}"
        )


def _points(sample) -> np.ndarray:
    if isinstance(sample, SphericalSample):
        return sample.points
    pts = np.asarray(sample, dtype=float)
    if pts.ndim != 2:
        raise ValueError("expected an n x (q+1) array of points")
    return pts


def kernel_psi(theta, a: float):
    """psi(theta; a) = cot(theta/2) + a tan(theta/2) for theta in (0, pi)."""
    theta = np.asarray(theta, dtype=float)
    if np.any((theta <= 0) | (theta >= math.pi)):
        bad = theta[(theta <= 0) | (theta >= math.pi)].flat[0]
        raise TieError(-1, -1, "coincident" if bad <= 0 else "antipodal")
    half = 0.5 * theta
    out = 1.0 / np.tan(half) + a * np.tan(half)
    return float(out) if out.ndim == 0 else out


def _upper(n):
    return np.triu_indices(n, 1)


def _pair_cos(X: np.ndarray) -> np.ndarray:
    # X: (n, p) or (B, n, p) -> upper-triangular cosines, (npairs,) or (B, npairs)
    n = X.shape[-2]
    iu, ju = _upper(n)
    G = X @ np.swapaxes(X, -1, -2)
    return np.clip(G[..., iu, ju], -1.0, 1.0)


def pairwise_angles(sample) -> PairwiseAngles:
    X = _points(sample)
    iu, ju = _upper(X.shape[0])
    c = _pair_cos(X)
    return PairwiseAngles(iu, ju, np.arccos(c))


def _check_ties(c: np.ndarray, n: int, antipodal: bool):
    iu, ju = _upper(n)
    hit = np.flatnonzero(c >= 1.0 - TIE_TOL)
    if hit.size:
        k = hit[0]
        raise TieError(int(iu[k]), int(ju[k]), "coincident")
    if antipodal:
        hit = np.flatnonzero(c <= -1.0 + TIE_TOL)
        if hit.size:
            k = hit[0]
            raise TieError(int(iu[k]), int(ju[k]), "antipodal")


def _half_angle_sums(c: np.ndarray, need_tan: bool):
    # sums over the last axis of cot(theta/2) and tan(theta/2)
    one_p = 1.0 + c
    one_m = 1.0 - c
    with np.errstate(divide="ignore"):
        s_cot = np.sum(np.sqrt(one_p / one_m), axis=-1)
        s_tan = np.sum(np.sqrt(one_m / one_p), axis=-1) if need_tan else None
    return s_cot, s_tan


def _require_pairs(X):
    if X.shape[-2] < 2:
        raise ValueError("need at least two observations")


def stat_pn(sample) -> float:
    """P_n = (2/n) sum_{i<j} cot(theta_ij / 2)."""
    X = _points(sample)
    _require_pairs(X)
    n = X.shape[0]
    c = _pair_cos(X)
    _check_ties(c, n, antipodal=False)
    s_cot, _ = _half_angle_sums(c, need_tan=False)
    return 2.0 / n * s_cot


def stat_tn(sample, a: float) -> float:
    """T_n(a); raises ``TieError`` on coincident pairs, and on antipodal pairs when a != 0."""
    X = _points(sample)
    _require_pairs(X)
    n, q = X.shape[0], X.shape[1] - 1
    e_h0 = expected_h0(KernelSpec(a, q))
    c = _pair_cos(X)
    _check_ties(c, n, antipodal=(a != 0))
    s_cot, s_tan = _half_angle_sums(c, need_tan=(a != 0))
    s = s_cot if a == 0 else s_cot + a * s_tan
    return 2.0 / n * s - (n - 1) * e_h0


@lru_cache(maxsize=64)
def _tnk_coefs(q: int, K: int, a: float) -> np.ndarray:
    return np.array(build_table(KernelSpec(a, q, K), K).b)


def _gegenbauer_pair_sums(c: np.ndarray, K: int, q: int) -> np.ndarray:
    # sum over pairs of C_k^{(q-1)/2}(c), k = 0..K; returns shape (..., K+1)
    lam = (q - 1) / 2.0
    C = gegenbauer_all(K, lam, c)
    return np.moveaxis(C.sum(axis=-1), 0, -1)


def stat_tnk(sample, spec: KernelSpec) -> float:
    """Truncated statistic T_{n,K}(a). Bounded kernel, so ties are allowed."""
    if spec.K is None:
        raise ValueError("stat_tnk needs a truncation level K")
    X = _points(sample)
    _require_pairs(X)
    n, q = X.shape[0], X.shape[1] - 1
    if q != spec.q:
        raise ValueError(f"sample lives on S^{q}, kernel spec is for q={spec.q}")
    b = _tnk_coefs(q, spec.K, spec.a)
    S = _gegenbauer_pair_sums(_pair_cos(X), spec.K, q)
    return 2.0 / n * float(np.dot(b[1:], S[1:]))


def stat_rayleigh(sample) -> float:
    """n (q+1) |mean|^2; asymptotically chi2 with q+1 dof under uniformity."""
    X = _points(sample)
    n, p = X.shape
    m = X.mean(axis=0)
    return float(n * p * np.dot(m, m))


def stat_bingham(sample) -> float:
    """(p(p+2)/2) n (tr S^2 - 1/p), S the scatter matrix; asymptotically
    chi2 with (p-1)(p+2)/2 dof."""
    X = _points(sample)
    n, p = X.shape
    S = X.T @ X / n
    return float(p * (p + 2) / 2.0 * n * (np.sum(S * S) - 1.0 / p))


def evaluate(sample, stat: StatSpec) -> float:
    """Evaluate any ``StatSpec`` on one sample (with tie checks)."""
    X = _points(sample)
    q = X.shape[1] - 1
    if stat.kind == "tn":
        return stat_tn(X, stat.a)
    if stat.kind == "tnk":
        return stat_tnk(X, stat.kernel(q))
    if stat.kind == "pn":
        return stat_pn(X)
    if stat.kind == "rayleigh":
        return stat_rayleigh(X)
    return stat_bingham(X)


def evaluate_batch(X: np.ndarray, stats: Sequence[StatSpec], chunk: int | None = None) -> dict:
    """Evaluate several statistics on a batch of samples.

    ``X`` has shape ``(B, n, q+1)``. Returns ``{StatSpec: array of shape (B,)}``.
    Pairwise cosines are computed once per chunk and shared. No tie checks:
    a singular pair yields ``inf``.
    """
    X = np.asarray(X, dtype=float)
    B, n, p = X.shape
    q = p - 1
    _require_pairs(X)
    out = {s: np.empty(B) for s in stats}
    stereo = [s for s in stats if s.kind in ("tn", "pn")]
    trunc = [s for s in stats if s.kind == "tnk"]
    need_tan = any(s.kind == "tn" and s.a != 0 for s in stereo)
    K_need = max((s.K for s in trunc), default=0)
    if chunk is None:
        chunk = max(1, int(4_000_000 // max(n * (n - 1) // 2 * max(1, K_need // 2), 1)))
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        Xc = X[lo:hi]
        if stereo or trunc:
            c = _pair_cos(Xc)
        if stereo:
            s_cot, s_tan = _half_angle_sums(c, need_tan)
            for s in stereo:
                if s.kind == "pn":
                    out[s][lo:hi] = 2.0 / n * s_cot
                else:
                    e_h0 = expected_h0(KernelSpec(s.a, q))
                    tot = s_cot if s.a == 0 else s_cot + s.a * s_tan
                    out[s][lo:hi] = 2.0 / n * tot - (n - 1) * e_h0
        if trunc:
            S = _gegenbauer_pair_sums(c, K_need, q)
            for s in trunc:
                b = _tnk_coefs(q, s.K, s.a)
                out[s][lo:hi] = 2.0 / n * (S[:, 1 : s.K + 1] @ b[1:])
        if any(s.kind == "rayleigh" for s in stats):
            m = Xc.mean(axis=1)
            out[StatSpec("rayleigh")][lo:hi] = n * p * np.sum(m * m, axis=1)
        if any(s.kind == "bingham" for s in stats):
            S2 = np.swapaxes(Xc, 1, 2) @ Xc / n
            out[StatSpec("bingham")][lo:hi] = p * (p + 2) / 2.0 * n * (np.sum(S2 * S2, axis=(1, 2)) - 1.0 / p)
    return out


# --- K-fold adaptive statistic -------------------------------------------------


def assign_folds(n: int, folds: int, gen: np.random.Generator) -> np.ndarray:
    """Random fold label per observation; fold sizes differ by at most one."""
    labels = np.empty(n, dtype=np.int64)
    labels[gen.permutation(n)] = np.arange(n) % folds
    return labels


def _half_angle_matrices(X):
    # full symmetric cot/tan(theta/2) matrices with zero diagonal; X (B, n, p)
    G = np.clip(X @ np.swapaxes(X, -1, -2), -1.0, 1.0)
    one_p = 1.0 + G
    one_m = 1.0 - G
    with np.errstate(divide="ignore"):
        cot = np.sqrt(one_p / one_m)
        tan = np.sqrt(one_m / one_p)
    n = X.shape[-2]
    idx = np.arange(n)
    cot[..., idx, idx] = 0.0
    tan[..., idx, idx] = 0.0
    return cot, tan


def _fold_quadratic(F, A):
    # diag(F' A F) / 2 per batch element: pair sums of A within each indicator column
    return np.sum(F * (A @ F), axis=1) / 2.0


def kfold_batch(X: np.ndarray, folds: int, grid: Sequence[float], p_value_fn: Callable,
                rng, alpha: float = 0.05, chunk: int = 200) -> dict:
    """K-fold adaptive test on each sample of a batch.

    For fold k, a_k maximizes T(a) over ``grid`` on the observations outside
    fold k; T(a_k) is evaluated on fold k and turned into a p-value with
    ``p_value_fn(a, fold_size, values)``. Fold p-values are combined by
    Bonferroni: reject when min_k p_k <= alpha / folds.

    Returns arrays ``min_p``, ``p_adjusted``, ``reject`` and ``a_selected``
    (shape (B, folds)).
    """
    X = np.asarray(X, dtype=float)
    B, n, p = X.shape
    q = p - 1
    grid = np.asarray(sorted(set(float(a) for a in grid)))
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < 2 * folds:
        raise ValueError(f"n = {n} too small for {folds} folds (each fold needs >= 2 points)")
    if grid.size == 0:
        raise ValueError("empty parameter grid")
    gen = as_stream(rng).generator
    e0 = expected_h0(KernelSpec(0.0, q))
    labels = np.stack([assign_folds(n, folds, gen) for _ in range(B)])
    fold_stat = np.empty((B, folds))
    fold_a = np.empty((B, folds))
    fold_size = np.stack([np.bincount(lab, minlength=folds) for lab in labels])
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        cot, tan = _half_angle_matrices(X[lo:hi])
        ind = (labels[lo:hi, :, None] == np.arange(folds)).astype(float)  # (b, n, K)
        comp = 1.0 - ind
        # pair sums inside each fold / its complement: diag(F' A F) / 2
        in_cot = _fold_quadratic(ind, cot)
        in_tan = _fold_quadratic(ind, tan)
        out_cot = _fold_quadratic(comp, cot)
        out_tan = _fold_quadratic(comp, tan)
        m_in = fold_size[lo:hi].astype(float)
        m_out = n - m_in
        # T_m(a) = (2/m)(S_cot + a S_tan) - (m - 1)(1 + a) E_0, for every grid value
        t_out = (2.0 / m_out[..., None]) * (out_cot[..., None] + grid * out_tan[..., None]) \
            - (m_out[..., None] - 1.0) * (1.0 + grid) * e0
        with np.errstate(invalid="ignore"):
            best = np.argmax(np.nan_to_num(t_out, nan=-np.inf), axis=-1)
        a_sel = grid[best]
        fold_a[lo:hi] = a_sel
        fold_stat[lo:hi] = (2.0 / m_in) * (in_cot + a_sel * in_tan) - (m_in - 1.0) * (1.0 + a_sel) * e0
    pvals = np.empty((B, folds))
    for a in np.unique(fold_a):
        for size in np.unique(fold_size):
            sel = (fold_a == a) & (fold_size == size)
            if sel.any():
                pvals[sel] = p_value_fn(float(a), int(size), fold_stat[sel])
    min_p = pvals.min(axis=1)
    p_adj = np.minimum(1.0, folds * min_p)
    return {
        "min_p": min_p,
        "p_adjusted": p_adj,
        "reject": min_p <= alpha / folds,
        "a_selected": fold_a,
        "fold_statistic": fold_stat,
        "fold_p": pvals,
    }


def stat_kfold(sample, folds: int, grid: Iterable[float], calibrator: Callable,
               rng: RandomStream | int | None = None, alpha: float = 0.05) -> TestReport:
    """K-fold adaptive T_n(a) test of one sample.

    ``calibrator(a, m)`` must return a null model (anything with a
    ``p_value`` method) for T_m(a) at fold size ``m``.
    """
    X = _points(sample)
    stream = as_stream(rng)
    models = {}

    def p_value_fn(a, size, values):
        key = (a, size)
        if key not in models:
            models[key] = calibrator(a, size)
        return models[key].p_value(values)

    res = kfold_batch(X[None], folds, list(grid), p_value_fn, stream, alpha=alpha)
    n, q = X.shape[0], X.shape[1] - 1
    return TestReport(
        statistic=float(res["min_p"][0]),
        stat=f"T_n^({folds})",
        method="exact-n MC per fold, Bonferroni",
        critical_value=alpha / folds,
        p_value=float(res["p_adjusted"][0]),
        reject=bool(res["reject"][0]),
        alpha=alpha,
        seed=stream.seed,
        n=n,
        q=q,
        details={
            "a_selected": res["a_selected"][0].tolist(),
            "fold_statistic": res["fold_statistic"][0].tolist(),
            "fold_p": res["fold_p"][0].tolist(),
            "stream": stream.key,
        },
    )
