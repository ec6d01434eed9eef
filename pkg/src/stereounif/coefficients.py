"""Gegenbauer and Sobolev coefficients of the stereographic kernel

    psi(theta; a) = cot(theta / 2) + a * tan(theta / 2),   a in [-1, 1],

on the sphere S^q, q >= 2.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .special import gegenbauer, gegenbauer_at_one

__all__ = [
    "KernelSpec",
    "CoefficientTable",
    "alpha",
    "gegenbauer_coef",
    "gegenbauer_coef_oracle",
    "expected_h0",
    "harmonic_dim",
    "orthogonality_constant",
    "build_table",
    "tail_variance",
    "series_variance",
    "write_table_csv",
]


@dataclass(frozen=True)
class KernelSpec:
    """Kernel parameter ``a``, sphere dimension ``q`` and optional truncation ``K``."""

    a: float
    q: int
    K: int | None = None

    def __post_init__(self):
        if not -1.0 <= self.a <= 1.0:
            raise ValueError(f"kernel parameter a must lie in [-1, 1], got {self.a}")
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(
                f"q must be an integer >= 2, got {self.q} (the kernel has no finite "
                "expansion on the circle)"
            )
        if self.K is not None and (int(self.K) != self.K or self.K < 1):
            raise ValueError(f"truncation K must be a positive integer, got {self.K}")

    @property
    def lam(self) -> float:
        """Gegenbauer index (q - 1) / 2."""
        return (self.q - 1) / 2.0

    @property
    def truncated(self) -> bool:
        return self.K is not None


def _readonly(arr):
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CoefficientTable:
    """Coefficient sequences for k = 0..k_max. Immutable."""

    spec: KernelSpec
    b: np.ndarray
    w: np.ndarray
    d: np.ndarray
    c: np.ndarray
    e_h0: float

    @property
    def k_max(self) -> int:
        return len(self.b) - 1

    @property
    def q(self) -> int:
        return self.spec.q

    def effective_k(self) -> int:
        """Largest index entering the statistic (spec.K if truncated)."""
        if self.spec.K is None:
            return self.k_max
        return min(self.spec.K, self.k_max)


def _check_kq(k, q):
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a non-negative integer, got {k}")
    if int(q) != q or q < 2:
        raise ValueError(f"q must be an integer >= 2, got {q}")


def alpha(k: int, q: int) -> float:
    """Gamma(k+1/2)^2 Gamma((q-1)/2)^2 / (2 pi Gamma(k+q/2)^2), in log space."""
    _check_kq(k, q)
    lg = math.lgamma
    return math.exp(
        2.0 * lg(k + 0.5) + 2.0 * lg((q - 1) / 2.0) - math.log(2.0 * math.pi) - 2.0 * lg(k + q / 2.0)
    )


def gegenbauer_coef(k: int, spec: KernelSpec) -> float:
    """Closed-form Gegenbauer coefficient b_{k,q} of psi(.; a)."""
    _check_kq(k, spec.q)
    q, a = spec.q, spec.a
    m, odd = divmod(k, 2)
    if odd:
        return alpha(m, q) * (2 * m + 1) * (4 * m + q + 1) / (2 * m + q) * (1.0 - a)
    return alpha(m, q) * (4 * m + q - 1) * (1.0 + a)


def expected_h0(spec: KernelSpec) -> float:
    """E[psi(theta_12; a)] under uniformity; this is b_{0,q}."""
    return gegenbauer_coef(0, spec)


def harmonic_dim(k: int, q: int) -> int:
    """Dimension d_{k,q} of the degree-k spherical harmonics on S^q."""
    _check_kq(k, q)
    lam = (q - 1) / 2.0
    return int(round((1.0 + 2.0 * k / (q - 1)) * gegenbauer_at_one(k, lam)))


def _log_area_ratio(q: int) -> float:
    # log(omega_q / omega_{q-1}), omega_q = 2 pi^{(q+1)/2} / Gamma((q+1)/2)
    return 0.5 * math.log(math.pi) + math.lgamma(q / 2.0) - math.lgamma((q + 1) / 2.0)


def orthogonality_constant(k: int, q: int) -> float:
    """c_{k,q}: squared L2 norm of C_k^{(q-1)/2} under the weight (1 - x^2)^{q/2 - 1}."""
    _check_kq(k, q)
    scale = 1.0 + 2.0 * k / (q - 1)
    return math.exp(_log_area_ratio(q)) * harmonic_dim(k, q) / scale**2


def gegenbauer_coef_oracle(k: int, spec: KernelSpec, tol: float = 1e-11) -> float:
    """b_{k,q} by adaptive quadrature of the defining integral.

    Integrates psi(theta; a) C_k(cos theta) sin^{q-1}(theta) over (0, pi);
    the theta form removes the (1 - x^2) Jacobian singularity. Meant as an
    independent check of ``gegenbauer_coef``.
    """
    _check_kq(k, spec.q)
    q, a, lam = spec.q, spec.a, spec.lam

    def integrand(theta):
        half = 0.5 * theta
        psi = 1.0 / math.tan(half) + a * math.tan(half)
        return psi * gegenbauer(k, lam, math.cos(theta)) * math.sin(theta) ** (q - 1)

    # finer panels next to the endpoints, where psi blows up
    edges = [0.0, 1e-3, 0.05, 0.5, math.pi / 2, math.pi - 0.5, math.pi - 0.05, math.pi - 1e-3, math.pi]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(integrand, lo, hi, epsabs=tol, epsrel=tol, limit=400)
            except integrate.IntegrationWarning as exc:
                raise ArithmeticError(
                    f"quadrature for b_{{{k},{q}}} (a={a}) failed on [{lo:.4g}, {hi:.4g}]: {exc}"
                ) from exc
        total += val
    return total / orthogonality_constant(k, q)


def build_table(spec: KernelSpec, K_max: int = 1000) -> CoefficientTable:
    """Precompute b, w, d, c for k = 0..K_max."""
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    q = spec.q
    ks = range(K_max + 1)
    b = np.array([gegenbauer_coef(k, spec) for k in ks])
    d = np.array([harmonic_dim(k, q) for k in ks], dtype=np.int64)
    scale = 1.0 + 2.0 * np.arange(K_max + 1) / (q - 1)
    w = b / scale
    c = np.exp(_log_area_ratio(q)) * d / scale**2
    return CoefficientTable(spec, _readonly(b), _readonly(w), _readonly(d), _readonly(c), float(b[0]))


def _limit_ratio(q: int, a: float) -> tuple[float, float]:
    # lim k^{q-1} w_k^2 d_k along even and odd k; from alpha_{m,q} ~ G m^{1-q}
    # and d_k ~ 2 k^{q-1} / (q-1)!
    G = math.exp(2.0 * math.lgamma((q - 1) / 2.0)) / (2.0 * math.pi)
    base = 2.0 ** (2 * q - 1) * G**2 * (q - 1) ** 2 / math.factorial(q - 1)
    return base * (1.0 + a) ** 2, base * (1.0 - a) ** 2


def _remainder_bound(table: CoefficientTable) -> float:
    """Bound on sum_{k > k_max} w_k^2 d_k (not doubled).

    k^{q-1} w_k^2 d_k increases towards its limit along each parity class,
    so the larger of the limit and the last tabulated ratio bounds every
    later term; each parity class then sums to at most half the integral of
    C x^{1-q} over (k_max - 1, inf).
    """
    q, K = table.q, table.k_max
    lim_even, lim_odd = _limit_ratio(q, table.spec.a)
    ratio = table.w**2 * table.d * np.arange(K + 1, dtype=float) ** (q - 1)
    last = {K % 2: ratio[K], (K - 1) % 2: ratio[K - 1]}
    c_even = max(lim_even, last[0])
    c_odd = max(lim_odd, last[1])
    return 0.5 * (c_even + c_odd) * (K - 1.0) ** (2 - q) / (q - 2)


def tail_variance(table: CoefficientTable, K: int) -> float:
    """Variance of the omitted part sum_{k > K} w_k (Y_k - d_k) of the null series.

    Exact over the tabulated range plus an analytic bound beyond it. For a
    truncated kernel the series stops at ``spec.K`` and the result is exact.
    Returns ``math.inf`` when the series variance diverges (q = 2,
    untruncated), which is the non-summability flag.
    """
    if K < 0 or K > table.k_max:
        raise ValueError(f"K must lie in [0, {table.k_max}], got {K}")
    stop = table.effective_k()
    head = 2.0 * float(np.sum(table.w[K + 1 : stop + 1] ** 2 * table.d[K + 1 : stop + 1]))
    if table.spec.truncated and table.spec.K <= table.k_max:
        return head
    if table.q == 2:
        return math.inf
    return head + 2.0 * _remainder_bound(table)


def series_variance(table: CoefficientTable) -> float:
    """Variance 2 sum_k w_k^2 d_k of the limiting null series (k >= 1)."""
    return tail_variance(table, 0)


def write_table_csv(table: CoefficientTable, path) -> Path:
    """Dump a table with columns k, b, w, d, c."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "b", "w", "d", "c"])
        for k in range(table.k_max + 1):
            writer.writerow([k, repr(float(table.b[k])), repr(float(table.w[k])), int(table.d[k]),
                             repr(float(table.c[k]))])
    return path
