"""Synthetic sample sets with prescribed mean and unbiased covariance.

The worked examples publish only the estimates (c_bar, S*, ...), not raw
draws.  :func:`synthesize` makes a sample whose mean and S* equal given
targets up to rounding: seeded normal draws are centred, whitened so their
scatter is exactly ``(N-1) I``, then mapped through a root of the target.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .elliptical import make_rng
from .model import SampleSet

__all__ = ["DEFAULT_SEED", "EXAMPLE_TARGETS", "synthesize", "example_samples", "write_example_fixtures"]

DEFAULT_SEED = 20240917

_A = ((12.0, 2.0, 4.0), (7.0, 5.0, 12.0), (2.0, 4.0, 3.5))
_B = (1000.0, 1500.0, 750.0)
_VAR_A = ((30.0, 10.0, 12.0), (22.0, 32.0, 15.0), (15.0, 14.0, 9.0))
_VAR_B = (5000.0, 4000.0, 500.0)

# id -> (N, mean, diagonal of S*, column names)
EXAMPLE_TARGETS = {
    "ex1_c": (12, (50.0, 70.0, 70.0), (450.0, 2600.0, 850.0), ("c1", "c2", "c3")),
    "ex2_a1": (25, _A[0], _VAR_A[0], ("a11", "a12", "a13")),
    "ex2_a2": (25, _A[1], _VAR_A[1], ("a21", "a22", "a23")),
    "ex2_a3": (25, _A[2], _VAR_A[2], ("a31", "a32", "a33")),
    "ex3_b": (25, _B, _VAR_B, ("b1", "b2", "b3")),
    "ex4_g1": (25, _A[0] + (_B[0],), _VAR_A[0] + (_VAR_B[0],), ("a11", "a12", "a13", "b1")),
    "ex4_g2": (25, _A[1] + (_B[1],), _VAR_A[1] + (_VAR_B[1],), ("a21", "a22", "a23", "b2")),
    "ex4_g3": (25, _A[2] + (_B[2],), _VAR_A[2] + (_VAR_B[2],), ("a31", "a32", "a33", "b3")),
}


def _seed_for(seed: int, sample_id: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed)] + list(sample_id.encode()))


def synthesize(mean, cov, N: int, seed=DEFAULT_SEED, id: str = "sample", columns=()) -> SampleSet:
    """N x d sample whose mean is ``mean`` and whose S* is ``cov``.

    Needs ``N > d`` so the whitening step has full rank.  ``cov`` may be
    singular; directions with zero variance come out constant.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mean.size
    if cov.shape != (d, d):
        raise ValueError(f"cov must be {d}x{d}, got {cov.shape}")
    if N <= d:
        raise ValueError(f"need N > d to hit a prescribed covariance, got N={N}, d={d}")
    rng = make_rng(seed if isinstance(seed, np.random.SeedSequence) else _seed_for(seed, id))
    Z = rng.standard_normal((N, d))
    Z -= Z.mean(axis=0)
    # whiten: Z'Z = (N-1) I exactly (up to rounding)
    w, V = np.linalg.eigh(Z.T @ Z)
    Z = Z @ V @ np.diag(np.sqrt((N - 1) / w)) @ V.T
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    root = V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T
    X = mean + Z @ root
    # remove the rounding drift of the mean
    X -= X.mean(axis=0) - mean
    return SampleSet(X, id=id, columns=tuple(columns))


def example_samples(seed=DEFAULT_SEED) -> dict:
    """All sample sets used by the four worked examples, keyed by id."""
    out = {}
    for sid, (N, mean, var, cols) in EXAMPLE_TARGETS.items():
        out[sid] = synthesize(mean, np.diag(var), N, seed, sid, cols)
    return out


def write_example_fixtures(directory, seed=DEFAULT_SEED) -> list:
    """Write every example sample set as a CSV file; returns the paths."""
    from .io import write_samples

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for sid, samples in example_samples(seed).items():
        path = directory / f"{sid}.csv"
        write_samples(samples, path)
        paths.append(path)
    return paths
