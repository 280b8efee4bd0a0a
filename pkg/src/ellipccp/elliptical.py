"""Elliptical density generators, samplers and Student-t distribution functions.

Every elliptical vector in dimension k has the stochastic representation

    x = mu + R * A u,

with u uniform on the unit sphere of R^k, A a root of the scale matrix and
R >= 0 a radius whose law is fixed by the density generator g.  The scale
matrix is *not* the covariance: ``Cov(x) = -2 phi'(0) A A'``.

Random numbers come from numpy's ``MT19937`` (a twisted generalized feedback
shift register), seeded explicitly, so fixtures reproduce bit-for-bit.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import SampleSet

__all__ = [
    "DensityGenerator",
    "Normal",
    "PearsonVII",
    "PowerExponential",
    "registry_get",
    "SHIPPED_GENERATORS",
    "make_rng",
    "sample_elliptical",
    "sample_elliptical_matrix",
    "standard_matrix_draws",
    "TStudent",
    "betainc_reg",
    "t_cdf",
    "t_sf",
    "t_pdf",
    "t_quantile",
    "t_statistic",
]

SHIPPED_GENERATORS = ("normal", "pearson7(5)", "power_exponential(1)")


def make_rng(seed) -> np.random.Generator:
    """Return a ``Generator`` on MT19937; existing generators pass through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.MT19937(seed))


class DensityGenerator:
    """Base class for a spherical density generator g.

    Subclasses supply the log-generator normalised for dimension ``dim``
    (so that ``pi^{k/2}/Gamma(k/2) * int v^{k/2-1} g(v) dv = 1``), the
    characteristic-generator slope phi'(0), and a radial sampler.
    """

    id: str = "abstract"

    def log_g(self, v, dim: int):
        raise NotImplementedError

    def g(self, v, dim: int):
        return np.exp(self.log_g(np.asarray(v, dtype=float), dim))

    def dlog_g(self, v, dim: int):
        """Derivative of ``log_g`` in v; central differences unless overridden."""
        v = np.asarray(v, dtype=float)
        h = 1e-6 * np.maximum(np.abs(v), 1e-3)
        return (self.log_g(v + h, dim) - self.log_g(v - h, dim)) / (2 * h)

    def phi_prime_0(self, dim: int = 1) -> float:
        raise NotImplementedError

    def variance_factor(self, dim: int = 1) -> float:
        """``-2 phi'(0)``, the ratio of covariance to scale matrix."""
        return -2.0 * self.phi_prime_0(dim)

    def sample_radius(self, rng: np.random.Generator, dim: int, size) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<DensityGenerator {self.id}>"


class Normal(DensityGenerator):
    id = "normal"

    def log_g(self, v, dim):
        return -0.5 * dim * math.log(2 * math.pi) - 0.5 * np.asarray(v, dtype=float)

    def dlog_g(self, v, dim):
        return np.full_like(np.asarray(v, dtype=float), -0.5)

    def phi_prime_0(self, dim=1):
        return -0.5

    def sample_radius(self, rng, dim, size):
        return np.sqrt(rng.chisquare(dim, size))


@dataclass(frozen=True, repr=False)
class PearsonVII(DensityGenerator):
    """Pearson type VII kernel in its multivariate-t form with ``nu`` degrees of freedom."""

    nu: float

    def __post_init__(self):
        if not self.nu > 2:
            raise ValueError(f"pearson7 needs nu > 2 for a finite covariance, got {self.nu}")

    @property
    def id(self):
        return f"pearson7({self.nu:g})"

    def log_g(self, v, dim):
        nu = self.nu
        return (
            math.lgamma((nu + dim) / 2)
            - math.lgamma(nu / 2)
            - 0.5 * dim * math.log(nu * math.pi)
            - 0.5 * (nu + dim) * np.log1p(np.asarray(v, dtype=float) / nu)
        )

    def dlog_g(self, v, dim):
        return -0.5 * (self.nu + dim) / (self.nu + np.asarray(v, dtype=float))

    def phi_prime_0(self, dim=1):
        return -0.5 * self.nu / (self.nu - 2)

    def sample_radius(self, rng, dim, size):
        return np.sqrt(rng.chisquare(dim, size) / (rng.chisquare(self.nu, size) / self.nu))


@dataclass(frozen=True, repr=False)
class PowerExponential(DensityGenerator):
    """Kotz-type power exponential kernel ``g(v) ~ exp(-v**beta / 2)``; beta=1 is normal."""

    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"power_exponential needs beta > 0, got {self.beta}")

    @property
    def id(self):
        return f"power_exponential({self.beta:g})"

    def log_g(self, v, dim):
        b = self.beta
        h = dim / (2 * b)
        const = (
            math.log(dim)
            + math.lgamma(dim / 2)
            - 0.5 * dim * math.log(math.pi)
            - math.lgamma(1 + h)
            - (1 + h) * math.log(2)
        )
        return const - 0.5 * np.asarray(v, dtype=float) ** b

    def dlog_g(self, v, dim):
        b = self.beta
        return -0.5 * b * np.asarray(v, dtype=float) ** (b - 1)

    def phi_prime_0(self, dim=1):
        b = self.beta
        # E[R^2] / dim, with R^(2b) ~ Gamma(dim / (2b), scale=2)
        log_ratio = math.lgamma((dim + 2) / (2 * b)) - math.lgamma(dim / (2 * b))
        return -0.5 * 2 ** (1 / b) * math.exp(log_ratio) / dim

    def sample_radius(self, rng, dim, size):
        return rng.gamma(dim / (2 * self.beta), 2.0, size) ** (1 / (2 * self.beta))


_ID_RE = re.compile(r"^\s*([a-z_0-9]+?)\s*(?:\(\s*([^)]*?)\s*\))?\s*$")


def registry_get(gen_id) -> DensityGenerator:
    """Look up a generator by id: ``normal``, ``pearson7(nu)`` or ``power_exponential(beta)``."""
    if isinstance(gen_id, DensityGenerator):
        return gen_id
    m = _ID_RE.match(str(gen_id).lower())
    if not m:
        raise KeyError(f"unknown density generator {gen_id!r}")
    name, arg = m.groups()
    if name == "normal" and arg is None:
        return Normal()
    if arg is None:
        raise ValueError(f"generator {name!r} needs a shape parameter, e.g. {name}(5)")
    try:
        value = float(arg)
    except ValueError:
        raise ValueError(f"bad shape parameter {arg!r} for {name!r}") from None
    if name in ("pearson7", "t", "student_t"):
        return PearsonVII(value)
    if name in ("power_exponential", "kotz"):
        return PowerExponential(value)
    raise KeyError(f"unknown density generator {gen_id!r}")


def _unit_sphere(rng, shape):
    u = rng.standard_normal(shape)
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    return u / norm


def _check_root(cov_root, d):
    L = np.asarray(cov_root, dtype=float)
    if L.shape != (d, d):
        raise ValueError(f"cov_root must be {d}x{d}, got {L.shape}")
    if np.any(np.triu(L, 1) != 0) or np.any(np.diag(L) < 0):
        raise ValueError("cov_root must be lower-triangular with nonnegative diagonal")
    return L


def sample_elliptical(mean, cov_root, generator, count: int, seed, id: str = "sample") -> SampleSet:
    """Draw ``count`` i.i.d. rows ``mean + R * cov_root @ u``.

    ``cov_root @ cov_root.T`` is the scale matrix; multiply by
    ``generator.variance_factor(d)`` to get the covariance of each row.
    """
    gen = registry_get(generator)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    L = _check_root(cov_root, d)
    rng = make_rng(seed)
    u = _unit_sphere(rng, (count, d))
    r = gen.sample_radius(rng, d, count)
    return SampleSet(mean + (r[:, None] * u) @ L.T, id=id)


def standard_matrix_draws(generator, replications: int, N: int, d: int, seed) -> np.ndarray:
    """``replications`` independent N x d matrices ``R * U`` with vec(U) uniform on S^{Nd-1}.

    Each matrix is one draw of the vector-elliptical law with identity
    location-free scale, so its rows are uncorrelated but share the radius.
    """
    gen = registry_get(generator)
    rng = make_rng(seed)
    k = N * d
    u = _unit_sphere(rng, (replications, k))
    r = gen.sample_radius(rng, k, replications)
    return (r[:, None] * u).reshape(replications, N, d)


def sample_elliptical_matrix(mean, cov_root, generator, count: int, seed, id: str = "sample") -> SampleSet:
    """One draw of an N x d sample matrix from E_{N x d}(1 mean', I_N (x) Sigma; g).

    This is the sampling model under which the studentised mean is exactly
    Student-t for every generator; the rows are exchangeable, not independent.
    """
    gen = registry_get(generator)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    L = _check_root(cov_root, d)
    Z = standard_matrix_draws(gen, 1, count, d, seed)[0]
    return SampleSet(mean + Z @ L.T, id=id)


# --- Student t -------------------------------------------------------------


def _betacf(a: float, b: float, x: float, max_iter: int = 10000) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    eps = 1e-16
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _stirling_tail(x: float) -> float:
    # log Gamma(x) - [(x - 1/2) log x - x + log(2 pi) / 2], valid for x >= 20
    x2 = x * x
    return (1 / 12 - (1 / 360 - (1 / 1260 - (1 / 1680 - 1 / (1188 * x2)) / x2) / x2) / x2) / x


def log_beta(a: float, b: float) -> float:
    """log B(a, b), keeping full precision when one argument is large."""
    small, big = (a, b) if a <= b else (b, a)
    if big < 20.0:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    # lgamma(big) - lgamma(big + small) by differencing Stirling expansions
    diff = (
        -(big + small - 0.5) * math.log1p(small / big)
        - small * math.log(big)
        + small
        + _stirling_tail(big)
        - _stirling_tail(big + small)
    )
    return math.lgamma(small) + diff


def betainc_reg(a: float, b: float, x: float, xc: float | None = None, log_x: float | None = None) -> float:
    """Regularised incomplete beta I_x(a, b).

    ``xc`` may carry an accurately computed ``1 - x`` and ``log_x`` an
    accurate ``log(x)``; both avoid cancellation when x is close to one.
    """
    if xc is None:
        xc = 1.0 - x
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    if log_x is None:
        log_x = math.log(x) if x < 0.5 else math.log1p(-xc)
    log_front = a * log_x + b * math.log(xc) - log_beta(a, b)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, xc) / b


@dataclass(frozen=True)
class TStudent:
    df: float

    def __post_init__(self):
        if not self.df >= 1:
            raise ValueError(f"degrees of freedom must be >= 1, got {self.df}")

    def cdf(self, t):
        return _vectorize(t_cdf, self, t)

    def sf(self, t):
        return _vectorize(t_sf, self, t)

    def pdf(self, t):
        return t_pdf(self, t)

    def ppf(self, p):
        return _vectorize(t_quantile, self, p)


def _vectorize(fn, dist, values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return fn(dist, float(arr))
    return np.array([fn(dist, float(v)) for v in arr.ravel()]).reshape(arr.shape)


def _as_dist(dist) -> TStudent:
    return dist if isinstance(dist, TStudent) else TStudent(dist)


def _upper_tail(df: float, t: float) -> float:
    # P(T > t) for t >= 0
    if t == 0.0:
        return 0.5
    if math.isinf(t):
        return 0.0
    t2 = t * t
    x = df / (df + t2)
    xc = t2 / (df + t2)
    return 0.5 * betainc_reg(df / 2.0, 0.5, x, xc, log_x=-math.log1p(t2 / df))


def t_sf(dist, t: float) -> float:
    """Survival function P(T > t)."""
    df = _as_dist(dist).df
    if math.isnan(t):
        return math.nan
    return _upper_tail(df, t) if t >= 0 else 1.0 - _upper_tail(df, -t)


def t_cdf(dist, t: float) -> float:
    """Student-t distribution function via the regularised incomplete beta."""
    df = _as_dist(dist).df
    if math.isnan(t):
        return math.nan
    return _upper_tail(df, -t) if t <= 0 else 1.0 - _upper_tail(df, t)


def t_pdf(dist, t):
    """Student-t density with ``df`` degrees of freedom."""
    df = _as_dist(dist).df
    t = np.asarray(t, dtype=float)
    log_c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(math.pi * df)
    return np.exp(log_c - 0.5 * (df + 1) * np.log1p(t * t / df))


def t_quantile(dist, p: float) -> float:
    """Percent point F^{-1}(p), by bracketed root finding on the tail probability."""
    df = _as_dist(dist).df
    if not (0.0 < p < 1.0):
        raise ValueError(f"probability must lie strictly inside (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    tail = min(p, 1.0 - p)
    hi = 1.0
    while _upper_tail(df, hi) > tail:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError(f"quantile bracket overflow for p={p}, df={df}")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    # relative tolerance in t; the tail is evaluated in log space for small tails
    f = (lambda s: math.log(_upper_tail(df, s)) - math.log(tail)) if tail < 1e-3 else (
        lambda s: _upper_tail(df, s) - tail
    )
    t = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return t if p > 0.5 else -t


def t_statistic(x_bar, mu, s2, N):
    """Studentised mean ``sqrt(N) sqrt(N-1) (x_bar - mu) / sqrt(s2)`` with s2 the scatter.

    Accepts scalars or numpy arrays.
    """
    s2 = np.asarray(s2, dtype=float)
    if np.any(s2 <= 0):
        raise ValueError("scatter s2 must be positive")
    if N < 2:
        raise ValueError("need N >= 2")
    out = math.sqrt(N) * math.sqrt(N - 1) * (np.asarray(x_bar, dtype=float) - mu) / np.sqrt(s2)
    return float(out) if np.ndim(out) == 0 else out
