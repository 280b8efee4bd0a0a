"""Monte Carlo checks: t-invariance of the studentised mean and chance-constraint coverage.

Two sampling models are used on purpose.

* :func:`invariance_test` draws each N-sample as *one* vector-elliptical
  matrix (a single radius per sample).  That is the model under which the
  studentised mean is exactly t_{N-1} for every density generator.
* :func:`coverage_test` draws i.i.d. rows, which is how resampled data
  behaves in practice.  The sample mean is then only approximately
  elliptical, but the constraint margins built from the t quantile are
  conservative enough that the nominal level is still met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .elliptical import SHIPPED_GENERATORS, make_rng, registry_get, standard_matrix_draws, TStudent, t_statistic
from .estimators import EstimatorBundle
from .model import ColumnRef, FixedVector, JointRandomRef, ProblemSpec, RandomRef
from .transform import covariance_root, detect_case

__all__ = [
    "InvarianceResult",
    "ConstraintCoverage",
    "CoverageReport",
    "ks_statistic",
    "wilson_interval",
    "invariance_test",
    "coverage_test",
]

Z95 = NormalDist().inv_cdf(0.975)
CHUNK = 4096


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple:
    """Wilson score interval ``(low, high)`` for a binomial proportion."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    # the endpoints are exactly 0 and 1 at the extremes; do not let rounding move them
    low = 0.0 if successes == 0 else max(0.0, centre - half)
    high = 1.0 if successes == trials else min(1.0, centre + half)
    return low, high


def ks_statistic(values, cdf: Callable) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the sample and ``cdf``."""
    x = np.sort(np.asarray(values, dtype=float))
    M = x.size
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, M + 1)
    return float(max(np.max(i / M - F), np.max(F - (i - 1) / M)))


@dataclass(frozen=True)
class InvarianceResult:
    generator_id: str
    ks: float
    critical: float
    N: int
    M: int

    @property
    def passed(self) -> bool:
        return self.ks <= self.critical


def invariance_test(generator_ids: Sequence[str] = SHIPPED_GENERATORS, N: int = 10, M: int = 2000,
                    seed: int = 0, level: float = 0.01, statistic: Optional[Callable] = None) -> list:
    """KS test of simulated studentised means against t_{N-1}, per generator.

    Parameters
    ----------
    generator_ids : sequence of str
        Registry ids, e.g. ``"normal"`` or ``"pearson7(5)"``.
    N, M : int
        Sample size and number of replications (N >= 3, M >= 100).
    seed : int
        Master seed; generator k uses the substream ``(seed, k)``.
    level : float
        Significance level of the KS test.
    statistic : callable, optional
        ``statistic(samples)`` mapping an (M, N) array of zero-mean samples
        to M statistics.  Defaults to the studentised mean.  Exists so that
        a deliberately wrong statistic can be shown to fail.

    Returns
    -------
    list of InvarianceResult
    """
    if N < 3:
        raise ValueError(f"need N >= 3, got {N}")
    if M < 100:
        raise ValueError(f"need M >= 100, got {M}")
    gens = [registry_get(g) for g in generator_ids]
    if statistic is None:
        statistic = lambda X: t_statistic(X.mean(axis=1), 0.0, _scatter_1d(X), X.shape[1])
    from scipy.stats import kstwo

    critical = float(kstwo.ppf(1.0 - level, M))
    out = []
    for k, gen in enumerate(gens):
        X = standard_matrix_draws(gen, M, N, 1, np.random.SeedSequence([seed, k]))[:, :, 0]
        T = np.asarray(statistic(X), dtype=float)
        D = ks_statistic(T, TStudent(N - 1).cdf)
        out.append(InvarianceResult(gen.id, D, critical, N, M))
    return out


def _scatter_1d(X):
    Xc = X - X.mean(axis=1, keepdims=True)
    return np.einsum("ij,ij->i", Xc, Xc)


@dataclass(frozen=True)
class ConstraintCoverage:
    index: int
    rate: float
    nominal: float
    low: float
    high: float
    random: bool

    @property
    def half_width(self) -> float:
        return 0.5 * (self.high - self.low)

    @property
    def passed(self) -> bool:
        return self.high >= self.nominal or self.rate >= self.nominal


@dataclass(frozen=True)
class CoverageReport:
    """Per-constraint empirical satisfaction rates at a fixed decision x."""

    case: str
    generator_id: str
    M: int
    seed: int
    constraints: tuple = field(default_factory=tuple)

    @property
    def rates(self) -> np.ndarray:
        return np.array([c.rate for c in self.constraints])

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.constraints)


def _mean_draws(est: EstimatorBundle, generator, M: int, rng) -> np.ndarray:
    """M sample means of N i.i.d. rows from the elliptical law with the bundle's mean and S*.

    The scale root is the symmetric root of ``S* / variance_factor(r)`` where
    r is the rank, so degenerate covariances are handled exactly.
    """
    gen = registry_get(generator)
    root = covariance_root(est.unbiased_cov)
    r = root.shape[0]
    mean = np.asarray(est.mean, dtype=float)
    if r == 0:
        return np.broadcast_to(mean, (M, mean.size)).copy()
    root = root / math.sqrt(gen.variance_factor(r))
    N = est.N
    out = np.empty((M, mean.size))
    for start in range(0, M, CHUNK):
        k = min(CHUNK, M - start)
        u = rng.standard_normal((k, N, r))
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        R = gen.sample_radius(rng, r, (k, N))
        out[start:start + k] = (R[..., None] * u).mean(axis=1) @ root
    return mean + out


def coverage_test(spec: ProblemSpec, estimators: Mapping[str, EstimatorBundle], x, generator_id: str = "normal",
                  M: int = 20000, seed: int = 0, feas_tol: float = 1e-8) -> CoverageReport:
    """Empirical satisfaction rate of each constraint at a fixed x.

    The bundles' means and unbiased covariances act as the true parameters.
    Each replication draws a fresh size-N sample from the chosen generator,
    takes its mean (a_bar_i, b_bar_i or g_bar_i, per the case) and checks the
    constraint at x, allowing ``feas_tol`` of slack as the solver does.
    Fixed constraints are checked once and report rate 0 or 1.  Constraint
    i uses the RNG substream ``(seed, i)``.
    """
    case = detect_case(spec)
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_vars,):
        raise ValueError(f"x has shape {x.shape}, expected ({spec.n_vars},)")
    gen = registry_get(generator_id)
    rows = []
    for i, con in enumerate(spec.constraints):
        rng = make_rng(np.random.SeedSequence([seed, i]))
        alpha = con.alpha
        if isinstance(con.row, FixedVector) and not isinstance(con.rhs, ColumnRef):
            ok = float(con.row.values @ x) <= con.rhs.value + feas_tol
            hits, random = (M if ok else 0), False
        elif isinstance(con.row, JointRandomRef):
            est = estimators[con.row.sample_id]
            G = _mean_draws(est, gen, M, rng)
            hits, random = int(np.count_nonzero(G[:, :-1] @ x - G[:, -1] <= feas_tol)), True
        elif isinstance(con.row, RandomRef):
            est = estimators[con.row.sample_id]
            A = _mean_draws(est, gen, M, rng)
            hits, random = int(np.count_nonzero(A @ x <= con.rhs.value + feas_tol)), True
        elif isinstance(con.rhs, ColumnRef):
            est = estimators[con.rhs.sample_id]
            B = _mean_draws(est, gen, M, rng)[:, con.rhs.column]
            hits, random = int(np.count_nonzero(float(con.row.values @ x) <= B + feas_tol)), True
        else:
            raise ValueError(f"constraint {i + 1}: case {case.value} does not match its references")
        nominal = 1.0 - alpha if (random and alpha is not None) else 1.0
        low, high = wilson_interval(hits, M)
        rows.append(ConstraintCoverage(i + 1, hits / M, nominal, low, high, random))
    return CoverageReport(case.value, gen.id, M, seed, tuple(rows))
