"""Numeric kernels: log-gamma, Gegenbauer polynomials, the regularized
incomplete beta function and its inverse, and chi-square sampling."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .rng import RandomStream, as_stream

__all__ = [
    "log_gamma",
    "gegenbauer",
    "gegenbauer_all",
    "gegenbauer_at_one",
    "reg_inc_beta",
    "reg_inc_beta_inv",
    "sample_chisq",
]

_FPMIN = 1e-300
_CF_EPS = 1e-16
_CF_MAXIT = 1000


def log_gamma(x):
    """Natural log of the gamma function for positive ``x`` (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("log_gamma is only defined for x > 0")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    return gammaln(arr)


def _check_gegenbauer(k, lam):
    if int(k) != k or k < 0:
        raise ValueError(f"degree must be a non-negative integer, got {k}")
    if not lam > 0:
        raise ValueError(f"Gegenbauer index must be positive, got {lam}")


def gegenbauer(k: int, lam: float, x):
    """Evaluate C_k^lam(x) by the ascending three-term recurrence.

    ``x`` may be a scalar or array with entries in [-1, 1].
    """
    _check_gegenbauer(k, lam)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise ValueError("Gegenbauer argument must lie in [-1, 1]")
    out = gegenbauer_all(int(k), lam, x)[-1]
    return float(out) if out.ndim == 0 else out


def gegenbauer_all(K: int, lam: float, x) -> np.ndarray:
    """Stack of C_0^lam(x), ..., C_K^lam(x); shape ``(K + 1,) + x.shape``.

    No domain checks; used in inner loops.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((K + 1,) + x.shape)
    out[0] = 1.0
    if K >= 1:
        out[1] = 2.0 * lam * x
    for k in range(2, K + 1):
        out[k] = (2.0 * x * (k + lam - 1) * out[k - 1] - (k + 2 * lam - 2) * out[k - 2]) / k
    return out


def gegenbauer_at_one(k: int, lam: float) -> float:
    """C_k^lam(1) = Gamma(k + 2 lam) / (Gamma(2 lam) k!), via log-gamma."""
    _check_gegenbauer(k, lam)
    if k == 0:
        return 1.0
    return math.exp(math.lgamma(k + 2 * lam) - math.lgamma(2 * lam) - math.lgamma(k + 1))


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def _log_beta(a, b):
    return gammaln(a) + gammaln(b) - gammaln(a + b)


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta function I_x(a, b).

    Continued fraction on whichever side of ``(a + 1) / (a + b + 2)`` makes
    it converge fast; the other side uses I_x(a, b) = 1 - I_{1-x}(b, a).
    """
    x_arr, a_arr, b_arr = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    )
    if np.any(~(a_arr > 0)) or np.any(~(b_arr > 0)):
        raise ValueError("reg_inc_beta requires a > 0 and b > 0")
    if np.any(~((x_arr >= 0) & (x_arr <= 1))):
        raise ValueError("reg_inc_beta requires 0 <= x <= 1")
    out = np.where(x_arr >= 1.0, 1.0, 0.0)
    inner = (x_arr > 0) & (x_arr < 1)
    if inner.any():
        xi, ai, bi = x_arr[inner], a_arr[inner], b_arr[inner]
        flip = xi > (ai + 1.0) / (ai + bi + 2.0)
        xs = np.where(flip, 1.0 - xi, xi)
        as_ = np.where(flip, bi, ai)
        bs = np.where(flip, ai, bi)
        log_front = as_ * np.log(xs) + bs * np.log1p(-xs) - _log_beta(as_, bs)
        val = np.exp(log_front) * _betacf(as_, bs, xs) / as_
        out[inner] = np.where(flip, 1.0 - val, val)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _inv_initial_guess(u, a, b):
    # power-law tail approximations of I_x near 0 and 1, glued at their crossover
    t = np.exp(a * np.log(a / (a + b))) / a
    s = np.exp(b * np.log(b / (a + b))) / b
    w = t + s
    lower = u < t / w
    x_lo = (a * w * u) ** (1.0 / a)
    x_hi = 1.0 - (b * w * (1.0 - u)) ** (1.0 / b)
    return np.where(lower, x_lo, x_hi)


def reg_inc_beta_inv(u, a, b, tol: float = 1e-10, maxiter: int = 200):
    """Inverse of ``reg_inc_beta`` in its first argument.

    Newton iteration kept inside a shrinking bracket; a step leaving the
    bracket is replaced by bisection. Stops once steps are at rounding level
    and |I_x(a, b) - u| <= ``tol``.
    """
    u_arr, a_arr, b_arr = np.broadcast_arrays(
        np.asarray(u, dtype=float), np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    )
    if np.any(~((u_arr >= 0) & (u_arr <= 1))):
        raise ValueError("reg_inc_beta_inv requires 0 <= u <= 1")
    if np.any(~(a_arr > 0)) or np.any(~(b_arr > 0)):
        raise ValueError("reg_inc_beta_inv requires a > 0 and b > 0")
    out = np.where(u_arr >= 1.0, 1.0, 0.0)
    inner = (u_arr > 0) & (u_arr < 1)
    if inner.any():
        out[inner] = _invert(u_arr[inner], a_arr[inner], b_arr[inner], tol, maxiter)
    return float(out) if out.ndim == 0 else out


def _invert(u, a, b, tol, maxiter):
    x = np.clip(_inv_initial_guess(u, a, b), 1e-300, 1.0 - 1e-16)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    log_b = _log_beta(a, b)
    idx = np.arange(u.size)
    for _ in range(maxiter):
        if idx.size == 0:
            break
        xi, ui, ai, bi = x[idx], u[idx], a[idx], b[idx]
        f = reg_inc_beta(xi, ai, bi) - ui
        lo[idx] = np.where(f < 0, xi, lo[idx])
        hi[idx] = np.where(f > 0, xi, hi[idx])
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            dens = np.exp((ai - 1.0) * np.log(xi) + (bi - 1.0) * np.log1p(-xi) - log_b[idx])
            x_new = xi - f / dens
        bad = ~np.isfinite(x_new) | (x_new <= lo[idx]) | (x_new >= hi[idx])
        x_new = np.where(bad, 0.5 * (lo[idx] + hi[idx]), x_new)
        small = np.abs(x_new - xi) <= 1e-13 * np.maximum(xi, 1e-300)
        done = ((np.abs(f) <= tol) & small) | (f == 0)
        x[idx] = np.where(done, xi, x_new)
        idx = idx[~done]
    resid = np.abs(reg_inc_beta(x, a, b) - u)
    if np.any(resid > tol):
        raise ArithmeticError(f"reg_inc_beta_inv failed to converge (max residual {resid.max():.3g})")
    return x


def sample_chisq(dof, ncp=0.0, rng: RandomStream | int | None = None, size=None):
    """Draw from a (noncentral) chi-square distribution.

    Central draws come from gamma sampling; the noncentral case is
    chi2(dof - 1) + (Z + sqrt(ncp))**2 with Z standard normal.
    """
    gen = as_stream(rng).generator
    dof_arr = np.asarray(dof)
    if np.any(dof_arr < 1) or np.any(np.asarray(dof_arr, dtype=float) % 1 != 0):
        raise ValueError("dof must be a positive integer")
    if np.any(np.asarray(ncp) < 0):
        raise ValueError("ncp must be non-negative")
    if np.all(np.asarray(ncp) == 0):
        return gen.chisquare(dof, size=size)
    dof_f = np.asarray(dof, dtype=float)
    z = gen.standard_normal(size=size if size is not None else np.broadcast(dof_f, ncp).shape)
    head = (z + np.sqrt(ncp)) ** 2
    rest_dof = dof_f - 1.0
    if np.all(rest_dof == 0):
        return head
    rest = 2.0 * gen.standard_gamma(np.maximum(rest_dof, 1e-300) / 2.0, size=head.shape)
    return head + np.where(rest_dof > 0, rest, 0.0)
