"""Data-generating processes on S^q.

Uniform sampling, rotationally symmetric alternatives with density
proportional to f(kappa x'mu) (rejection on the projected coordinate plus the
tangent-normal decomposition), uniform spherical caps by CDF inversion, and
the uniform antipodal-dependent (UAD) process.

Functions named ``*_batch`` return arrays of shape ``(size, n, q+1)`` and
are what the Monte Carlo harnesses use; the single-sample functions wrap
them into a ``SphericalSample``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .rng import RandomStream, as_stream
from .sample import SphericalSample
from .special import reg_inc_beta, reg_inc_beta_inv

__all__ = [
    "ANGULAR_FUNCTIONS",
    "RotSymSpec",
    "CapSpec",
    "angular_function",
    "north_pole",
    "projected_cdf_Fq",
    "projected_quantile",
    "householder_complement",
    "tangent_normal_compose",
    "sample_uniform_sphere",
    "uniform_batch",
    "sample_rotsym",
    "rotsym_batch",
    "rotsym_projection",
    "envelope",
    "sample_cap",
    "cap_batch",
    "sample_uad",
    "uad_batch",
]

DEFAULT_NU = 0.25


def _vmf(s):
    return np.exp(s)


def _mixvmf(s):
    return np.cosh(s)


def _smallcircle(nu):
    # exp(-(s - nu)^2) rescaled so that f(0) = 1
    def f(s):
        return np.exp(-((s - nu) ** 2) + nu**2)

    return f


ANGULAR_FUNCTIONS = ("vmf", "mixvmf", "smallcircle")


def angular_function(f_id: str, nu: float = DEFAULT_NU) -> Callable:
    """Angular function ``f`` with f(0) = 1 for a named alternative."""
    if f_id == "vmf":
        return _vmf
    if f_id == "mixvmf":
        return _mixvmf
    if f_id == "smallcircle":
        return _smallcircle(nu)
    raise ValueError(f"unknown angular function {f_id!r}; expected one of {ANGULAR_FUNCTIONS}")


def north_pole(q: int) -> np.ndarray:
    mu = np.zeros(q + 1)
    mu[-1] = 1.0
    return mu


def _unit(mu, name="mu"):
    mu = np.asarray(mu, dtype=float)
    if abs(np.linalg.norm(mu) - 1.0) > 1e-12:
        raise ValueError(f"{name} must be a unit vector (norm {np.linalg.norm(mu):.15g})")
    return mu


@dataclass(frozen=True)
class RotSymSpec:
    """Location ``mu``, concentration ``kappa`` and angular function of a
    rotationally symmetric law. ``f`` overrides ``f_id`` when given."""

    mu: np.ndarray
    kappa: float
    f_id: str = "vmf"
    nu: float = DEFAULT_NU
    f: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mu", _unit(self.mu))
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.f is None:
            angular_function(self.f_id, self.nu)

    def angular(self) -> Callable:
        return self.f if self.f is not None else angular_function(self.f_id, self.nu)


@dataclass(frozen=True)
class CapSpec:
    """Uniform law on the cap {x : x'mu >= cos(theta)}, theta in radians."""

    mu: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "mu", _unit(self.mu))
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"cap angle must lie in [0, pi], got {self.theta}")


def projected_cdf_Fq(v, q: int):
    """CDF of x'mu when x is uniform on S^q: I_{(v+1)/2}(q/2, q/2)."""
    if q < 2:
        raise ValueError("q must be >= 2")
    v = np.clip(np.asarray(v, dtype=float), -1.0, 1.0)
    return reg_inc_beta((v + 1.0) / 2.0, q / 2.0, q / 2.0)


def projected_quantile(u, q: int):
    """Inverse of ``projected_cdf_Fq``."""
    return 2.0 * np.asarray(reg_inc_beta_inv(u, q / 2.0, q / 2.0)) - 1.0


def _reflector(mu):
    # Householder vector w with (I - 2 ww'/w'w) e_p = mu; w'w computed without
    # cancellation when mu is close to e_p
    mu = np.asarray(mu, dtype=float)
    head = mu[..., :-1]
    s = np.sum(head**2, axis=-1)
    last = mu[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        one_minus = np.where(last > 0, s / (1.0 + last), 1.0 - last)
    w = np.concatenate([-head, one_minus[..., None]], axis=-1)
    ww = s + one_minus**2
    return w, ww


def householder_complement(mu) -> np.ndarray:
    """(q+1) x q matrix with orthonormal columns spanning the complement of ``mu``.

    Built from the Householder reflection taking e_{q+1} to ``mu``, so the
    construction is deterministic.
    """
    mu = _unit(mu)
    p = mu.size
    w, ww = _reflector(mu)
    H = np.eye(p)
    if ww > 0:
        H -= 2.0 * np.outer(w, w) / ww
    return H[:, : p - 1]


def _apply_complement(u, mu):
    # Gamma_mu u for rows of u (..., q); mu broadcastable to (..., q+1)
    w, ww = _reflector(mu)
    pad = np.concatenate([u, np.zeros(u.shape[:-1] + (1,))], axis=-1)
    proj = np.sum(w * pad, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(ww > 0, 2.0 * proj / ww, 0.0)
    return pad - coef[..., None] * w


def tangent_normal_compose(v, u, mu):
    """v mu + sqrt(1 - v^2) Gamma_mu u.

    ``v`` scalar or shape (m,); ``u`` shape (q,) or (m, q); ``mu`` a unit
    vector of length q+1 or an (m, q+1) array of unit vectors.
    """
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    radial = np.sqrt(np.clip(1.0 - v**2, 0.0, None))
    out = v[..., None] * mu + radial[..., None] * _apply_complement(u, mu)
    return out


def _uniform_directions(gen, shape, dim):
    z = gen.standard_normal(shape + (dim,))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def uniform_batch(q: int, n: int, size: int, rng) -> np.ndarray:
    """``size`` iid uniform samples of ``n`` points on S^q."""
    gen = as_stream(rng).generator
    return _uniform_directions(gen, (size, n), q + 1)


def sample_uniform_sphere(q: int, n: int, rng: RandomStream | int | None = None) -> SphericalSample:
    """n iid points from Unif(S^q): normalized standard normal vectors."""
    if q < 1 or n < 1:
        raise ValueError("need q >= 1 and n >= 1")
    pts = uniform_batch(q, n, 1, rng)[0]
    if q < 2:
        return pts
    return SphericalSample(pts, {"process": "uniform"})


def envelope(f: Callable, kappa: float, grid: int = 10_000) -> float:
    """max of f over [-kappa, kappa]: dense grid scan plus a bounded refinement."""
    if kappa == 0:
        val = float(f(np.array(0.0)))
    else:
        s = np.linspace(-kappa, kappa, grid)
        vals = np.asarray(f(s), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ArithmeticError("angular function is not finite on [-kappa, kappa]")
        i = int(np.argmax(vals))
        val = float(vals[i])
        lo, hi = s[max(i - 1, 0)], s[min(i + 1, grid - 1)]
        if hi > lo:
            res = minimize_scalar(lambda x: -float(f(np.array(x))), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            if res.success:
                val = max(val, -float(res.fun))
    if not (np.isfinite(val) and val > 0):
        raise ArithmeticError(f"invalid rejection envelope {val!r}")
    return val * (1.0 + 1e-12)


def rotsym_projection(spec: RotSymSpec, q: int, count: int, rng, return_rate: bool = False):
    """Draw ``count`` values of V = X'mu with density prop. to f(kappa v)(1 - v^2)^{q/2 - 1}.

    Rejection against the projected-uniform proposal with envelope
    max_{|s| <= kappa} f(s).
    """
    gen = as_stream(rng).generator
    f = spec.angular()
    M = envelope(f, spec.kappa)
    out = np.empty(count)
    filled = proposed = accepted = 0
    batch = max(64, count)
    while filled < count:
        v = 2.0 * gen.beta(q / 2.0, q / 2.0, size=batch) - 1.0
        u = gen.random(batch)
        keep = v[u * M <= f(spec.kappa * v)]
        take = min(keep.size, count - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
        proposed += batch
        accepted += keep.size
        rate = max(keep.size / batch, 1e-3)
        batch = int(min(max(64, 1.2 * (count - filled) / rate), 5_000_000))
    if return_rate:
        return out, accepted / proposed
    return out


def rotsym_batch(spec: RotSymSpec, q: int, n: int, size: int, rng) -> np.ndarray:
    stream = as_stream(rng)
    if spec.mu.size != q + 1:
        raise ValueError(f"mu has dimension {spec.mu.size}, expected {q + 1}")
    v = rotsym_projection(spec, q, n * size, stream.substream("projection"))
    u = _uniform_directions(stream.substream("tangent").generator, (n * size,), q)
    x = tangent_normal_compose(v, u, spec.mu)
    return x.reshape(size, n, q + 1)


def sample_rotsym(spec: RotSymSpec, q: int, n: int, rng: RandomStream | int | None = None) -> SphericalSample:
    """n iid points with density proportional to f(kappa x'mu)."""
    return SphericalSample(rotsym_batch(spec, q, n, 1, rng)[0], {"process": spec.f_id})


def _cap_projection(theta: float, q: int, count: int, gen) -> np.ndarray:
    # V = G^{-1}(U) written through the upper tail: F(-V) = U' F(-cos theta),
    # which keeps full relative precision for small caps
    t = math.cos(theta)
    upper = float(projected_cdf_Fq(-t, q))
    u = gen.random(count)
    v = -projected_quantile(u * upper, q)
    return np.maximum(v, t)


def cap_batch(mus: np.ndarray, theta: float, rng) -> np.ndarray:
    """One cap-uniform point for each row of ``mus`` (shape (..., q+1))."""
    if theta <= 0:
        raise ValueError("cap angle must be > 0 (theta = 0 is a point mass)")
    if theta > math.pi:
        raise ValueError("cap angle must be <= pi")
    gen = as_stream(rng).generator
    mus = np.asarray(mus, dtype=float)
    q = mus.shape[-1] - 1
    shape = mus.shape[:-1]
    count = int(np.prod(shape)) if shape else 1
    v = _cap_projection(theta, q, count, gen).reshape(shape)
    u = _uniform_directions(gen, shape, q)
    return tangent_normal_compose(v, u, mus)


def sample_cap(spec: CapSpec, q: int, n: int, rng: RandomStream | int | None = None) -> SphericalSample:
    """n iid points from the uniform law on a spherical cap."""
    if spec.mu.size != q + 1:
        raise ValueError(f"mu has dimension {spec.mu.size}, expected {q + 1}")
    mus = np.broadcast_to(spec.mu, (n, q + 1))
    return SphericalSample(cap_batch(mus, spec.theta, rng), {"process": "cap"})


def uad_batch(q: int, n: int, theta: float, size: int, rng) -> np.ndarray:
    """UAD samples: rows 0..ceil(n/2)-1 uniform, row i + ceil(n/2) drawn
    uniformly from the cap of angle ``theta`` around -X_i."""
    if n < 2:
        raise ValueError("UAD samples need n >= 2")
    stream = as_stream(rng)
    head = (n + 1) // 2
    tail = n // 2
    base = uniform_batch(q, head, size, stream.substream("base"))
    dep = cap_batch(-base[:, :tail, :], theta, stream.substream("caps"))
    return np.concatenate([base, dep], axis=1)


def sample_uad(q: int, n: int, theta: float, rng: RandomStream | int | None = None) -> SphericalSample:
    """One UAD sample of size n on S^q with cap angle theta (radians)."""
    return SphericalSample(uad_batch(q, n, theta, 1, rng)[0], {"process": "uad"})
