"""Location and scatter estimators for elliptical samples.

For a sample matrix X (N x d) the scatter is ``S = X'(I - 11'/N)X``.  The
unbiased covariance ``S* = S/(N-1)`` does not depend on the density
generator; the elliptical maximum likelihood estimator ``lambda* S`` and the
generator-aware unbiased estimator ``S / (2(1-N) phi'(0))`` do.

Both generator-aware estimators treat the whole sample as one draw of the
vector-elliptical law ``E_{N x d}(1 mu', I_N (x) Sigma; g)``, so the
generator is evaluated in dimension ``N*d``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .elliptical import DensityGenerator, registry_get
from .model import SampleSet

__all__ = [
    "EstimatorBundle",
    "sample_mean",
    "scatter_matrix",
    "unbiased_cov",
    "mle_multiplier",
    "mle_cov",
    "unbiased_cov_elliptical",
    "estimate",
    "checksum",
]

LAMBDA_BRACKET = (1e-8, 1e8)


def _data(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.data
    arr = np.asarray(samples, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def sample_mean(samples) -> np.ndarray:
    X = _data(samples)
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    return X.mean(axis=0)


def scatter_matrix(samples) -> np.ndarray:
    """Sum of centred outer products, symmetrised."""
    X = _data(samples)
    if X.shape[0] < 2:
        raise ValueError(f"scatter needs N >= 2, got N={X.shape[0]}")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc
    return 0.5 * (S + S.T)


def unbiased_cov(samples) -> np.ndarray:
    X = _data(samples)
    return scatter_matrix(X) / (X.shape[0] - 1)


def mle_multiplier(generator, N: int, d: int, bracket=LAMBDA_BRACKET) -> float:
    """Maximiser of ``f(lam) = lam^{-N d / 2} g(d / lam)`` over the bracket.

    The search runs on log(lam).  A coarse scan locates the peak, then the
    root of the score ``-Nd/2 - u (log g)'(u)``, ``u = d / lam``, is found by
    Brent's method, which resolves lam to rounding level (a direct search on
    f cannot do better than about sqrt(machine eps)).  Raises
    ``ArithmeticError`` when the peak sits on the bracket edge.
    """
    from scipy.optimize import brentq, minimize_scalar

    gen = registry_get(generator)
    k = N * d

    def neg_log_f(log_lam):
        lam = math.exp(log_lam)
        return 0.5 * k * log_lam - float(gen.log_g(d / lam, k))

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    grid = np.linspace(lo, hi, 4001)
    vals = np.array([neg_log_f(v) for v in grid])
    if not np.all(np.isfinite(vals)):
        vals = np.where(np.isfinite(vals), vals, np.inf)
    i = int(np.argmin(vals))
    if i == 0 or i == grid.size - 1:
        raise ArithmeticError(
            f"profile likelihood for {gen.id} has no interior maximiser in lambda in {bracket}"
        )
    def score(log_lam):
        u = d * math.exp(-log_lam)
        return -0.5 * k - u * float(gen.dlog_g(u, k))

    a, b = grid[i - 1], grid[i + 1]
    sa, sb = score(a), score(b)
    if sa > 0 > sb:
        return math.exp(brentq(score, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    res = minimize_scalar(neg_log_f, bracket=(a, grid[i], b), method="golden", tol=1e-12)
    return math.exp(res.x)


def mle_cov(samples, generator) -> np.ndarray:
    """Elliptical maximum likelihood covariance ``lambda* S``; needs N >= d."""
    X = _data(samples)
    N, d = X.shape
    if N < d:
        raise ValueError(f"maximum likelihood needs N >= d, got N={N}, d={d}")
    S = scatter_matrix(X)
    if not np.any(S):
        return S
    return mle_multiplier(generator, N, d) * S


def unbiased_cov_elliptical(samples, generator) -> np.ndarray:
    """``S / (2 (1 - N) phi'(0))``; equals S/(N-1) for the normal generator."""
    X = _data(samples)
    N, d = X.shape
    gen = registry_get(generator)
    slope = gen.phi_prime_0(N * d)
    if not slope < 0:
        raise ValueError(f"phi'(0) must be negative, got {slope}")
    return scatter_matrix(X) / (2.0 * (1 - N) * slope)


def checksum(samples) -> str:
    """Short content hash of the sample data (little-endian float64)."""
    X = np.ascontiguousarray(_data(samples), dtype="<f8")
    h = hashlib.sha256()
    h.update(np.array(X.shape, dtype="<i8").tobytes())
    h.update(X.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class EstimatorBundle:
    mean: np.ndarray
    scatter: np.ndarray
    unbiased_cov: np.ndarray
    N: int
    mle_cov: Optional[np.ndarray] = None
    generator_id: Optional[str] = None
    sample_id: str = ""
    checksum: str = ""

    @property
    def d(self) -> int:
        return self.mean.shape[0]


def estimate(samples: SampleSet, generator: Optional[DensityGenerator | str] = None) -> EstimatorBundle:
    """Mean, scatter and S* for one sample set, plus the MLE when a generator is given."""
    X = _data(samples)
    N, d = X.shape
    S = scatter_matrix(X)
    mle = None
    gen_id = None
    if generator is not None:
        gen = registry_get(generator)
        gen_id = gen.id
        if N >= d:
            mle = mle_cov(X, gen)
    arrays = [sample_mean(X), S, S / (N - 1)]
    if mle is not None:
        arrays.append(mle)
    for a in arrays:
        a.setflags(write=False)
    return EstimatorBundle(
        mean=arrays[0],
        scatter=S,
        unbiased_cov=arrays[2],
        N=N,
        mle_cov=mle,
        generator_id=gen_id,
        sample_id=getattr(samples, "id", ""),
        checksum=checksum(X),
    )
