import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ellipccp.elliptical import registry_get, sample_elliptical
from ellipccp.estimators import (
    checksum,
    estimate,
    mle_cov,
    mle_multiplier,
    sample_mean,
    scatter_matrix,
    unbiased_cov,
    unbiased_cov_elliptical,
)
from ellipccp.fixtures import EXAMPLE_TARGETS, example_samples, synthesize
from ellipccp.model import SampleSet

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def sample_matrices(min_rows=2, max_rows=12, max_cols=4):
    return st.integers(1, max_cols).flatmap(
        lambda d: st.integers(min_rows, max_rows).flatmap(lambda N: arrays(float, (N, d), elements=finite))
    )


def scatter_by_loop(X):
    xbar = X.sum(axis=0) / X.shape[0]
    S = np.zeros((X.shape[1], X.shape[1]))
    for row in X:
        S += np.outer(row - xbar, row - xbar)
    return S


def scatter_by_centering_matrix(X):
    N = X.shape[0]
    C = np.eye(N) - np.ones((N, N)) / N
    return X.T @ C @ X


# --- scatter -----------------------------------------------------------------


@given(sample_matrices())
def test_scatter_two_routes(X):
    S = scatter_matrix(X)
    scale = max(1.0, np.abs(X).max()) ** 2 * X.shape[0]
    assert np.allclose(S, scatter_by_loop(X), atol=1e-12 * scale, rtol=0)
    assert np.allclose(S, scatter_by_centering_matrix(X), atol=1e-11 * scale, rtol=0)


@given(sample_matrices())
def test_scatter_is_symmetric_psd(X):
    S = scatter_matrix(X)
    assert np.array_equal(S, S.T)
    scale = max(1.0, np.abs(X).max()) ** 2 * X.shape[0]
    assert np.linalg.eigvalsh(S).min() >= -1e-10 * scale


@given(sample_matrices(), st.randoms(use_true_random=False))
def test_row_permutation_invariance(X, rnd):
    perm = list(range(X.shape[0]))
    rnd.shuffle(perm)
    Y = X[perm]
    scale = max(1.0, np.abs(X).max())
    assert np.allclose(sample_mean(Y), sample_mean(X), atol=1e-12 * scale, rtol=0)
    assert np.allclose(scatter_matrix(Y), scatter_matrix(X), atol=1e-11 * scale ** 2 * X.shape[0], rtol=0)


@given(sample_matrices(max_cols=3), st.data())
def test_affine_equivariance(X, data):
    d = X.shape[1]
    A = data.draw(arrays(float, (d, d), elements=st.floats(-3, 3)))
    b = data.draw(arrays(float, (d,), elements=st.floats(-10, 10)))
    Y = X @ A.T + b
    scale = max(1.0, np.abs(X).max()) ** 2 * X.shape[0] * 10
    assert np.allclose(sample_mean(Y), A @ sample_mean(X) + b, atol=1e-10 * scale, rtol=0)
    assert np.allclose(scatter_matrix(Y), A @ scatter_matrix(X) @ A.T, atol=1e-10 * scale * 9, rtol=0)


def test_unbiased_cov_matches_numpy():
    X = np.random.default_rng(2).normal(size=(30, 4))
    assert np.allclose(unbiased_cov(X), np.cov(X, rowvar=False), atol=1e-14)


def test_scatter_needs_two_rows():
    with pytest.raises(ValueError):
        scatter_matrix(np.ones((1, 3)))


def test_unbiased_cov_error_decays_with_N():
    Sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
    L = np.linalg.cholesky(Sigma)
    errs = []
    for N in (20, 200, 2000):
        e = [np.linalg.norm(unbiased_cov(sample_elliptical([0, 0], L, "normal", N, seed=s).data) - Sigma)
             for s in range(40)]
        errs.append(np.mean(e))
    assert errs[0] > errs[1] > errs[2]
    # roughly 1/sqrt(N)
    assert errs[0] / errs[2] == pytest.approx(10.0, rel=0.35)


# --- elliptical MLE ----------------------------------------------------------


@pytest.mark.parametrize("N, d", [(12, 3), (25, 4), (5, 1), (40, 2)])
def test_mle_normal_is_scatter_over_N(N, d):
    X = np.random.default_rng(N).normal(size=(N, d))
    assert np.allclose(mle_cov(X, "normal"), scatter_matrix(X) / N, rtol=1e-8, atol=0)


def pearson_log_profile(lam, nu, N, d):
    # log of lam^{-Nd/2} (1 + d/(lam nu))^{-(nu+Nd)/2}, written out by hand
    return -0.5 * N * d * np.log(lam) - 0.5 * (nu + N * d) * np.log1p(d / (lam * nu))


@pytest.mark.parametrize("nu, N, d", [(5.0, 12, 3), (3.0, 25, 4), (10.0, 8, 2)])
def test_mle_pearson_against_grid_search(nu, N, d):
    grid = np.arange(1, 2_000_001) * 1e-6  # (0, 2] at step 1e-6
    lam_grid = grid[np.argmax(pearson_log_profile(grid, nu, N, d))]
    coarse = np.linspace(2.0, 10.0, 8001)
    assert pearson_log_profile(coarse, nu, N, d).max() < pearson_log_profile(lam_grid, nu, N, d)
    assert mle_multiplier(f"pearson7({nu:g})", N, d) == pytest.approx(lam_grid, abs=1e-6)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 3.0])
@pytest.mark.parametrize("N, d", [(12, 3), (25, 4)])
def test_mle_power_exponential_closed_form(beta, N, d):
    # d/dlam [-Nd/2 log lam - (d/lam)^beta / 2] = 0
    ref = d * (beta / (N * d)) ** (1.0 / beta)
    assert mle_multiplier(f"power_exponential({beta:g})", N, d) == pytest.approx(ref, rel=1e-10)


def test_mle_exact_for_normal_and_pearson():
    assert mle_multiplier("normal", 12, 3) == pytest.approx(1 / 12, rel=1e-13)
    assert mle_multiplier("pearson7(5)", 25, 4) == pytest.approx(1 / 25, rel=1e-13)


def test_mle_needs_N_at_least_d():
    with pytest.raises(ValueError):
        mle_cov(np.ones((2, 3)), "normal")


def test_mle_of_constant_sample_is_zero():
    assert not np.any(mle_cov(np.ones((5, 2)), "pearson7(5)"))


# --- generator-aware unbiased estimator --------------------------------------


def test_elliptical_unbiased_normal_equals_sample_cov():
    X = np.random.default_rng(0).normal(size=(25, 4))
    assert np.allclose(unbiased_cov_elliptical(X, "normal"), unbiased_cov(X), rtol=1e-12, atol=0)


def test_elliptical_unbiased_pearson_closed_form():
    nu, X = 5.0, np.random.default_rng(1).normal(size=(25, 4))
    ref = scatter_matrix(X) * (nu - 2) / (nu * (X.shape[0] - 1))
    assert np.allclose(unbiased_cov_elliptical(X, "pearson7(5)"), ref, rtol=1e-12, atol=0)


def test_elliptical_unbiased_power_exponential():
    X = np.random.default_rng(4).normal(size=(10, 2))
    gen = registry_get("power_exponential(2)")
    ref = scatter_matrix(X) / ((X.shape[0] - 1) * gen.variance_factor(20))
    assert np.allclose(unbiased_cov_elliptical(X, gen), ref, rtol=1e-12, atol=0)


# --- bundles and fixtures ----------------------------------------------------


def test_bundle_is_read_only_and_carries_metadata():
    s = SampleSet(np.random.default_rng(3).normal(size=(6, 2)), id="q")
    b = estimate(s, "normal")
    assert (b.N, b.d, b.sample_id, b.generator_id) == (6, 2, "q", "normal")
    assert b.checksum == checksum(s)
    with pytest.raises(ValueError):
        b.mean[0] = 1.0
    assert estimate(s).mle_cov is None


def test_checksum_depends_on_shape_and_values():
    X = np.arange(6.0)
    assert checksum(X.reshape(2, 3)) != checksum(X.reshape(3, 2))
    assert checksum(X.reshape(2, 3)) != checksum(X.reshape(2, 3) + 1e-12)


@pytest.mark.parametrize("sid", sorted(EXAMPLE_TARGETS))
def test_fixture_moments_hit_targets(sid):
    N, mean, var, _ = EXAMPLE_TARGETS[sid]
    s = example_samples()[sid]
    assert s.N == N
    assert np.allclose(sample_mean(s), mean, rtol=1e-13, atol=0)
    assert np.allclose(unbiased_cov(s), np.diag(var), rtol=0, atol=1e-12 * max(var))


def test_synthesize_handles_singular_target():
    s = synthesize([1.0, 2.0], [[1.0, 0.0], [0.0, 0.0]], 6, seed=1)
    assert np.allclose(s.data[:, 1], 2.0) and unbiased_cov(s)[0, 0] == pytest.approx(1.0)


@given(st.integers(0, 2**31 - 1))
def test_synthesize_seed_independent_moments(seed):
    s = synthesize([0.0, 5.0, -1.0], np.diag([3.0, 1.0, 0.5]), 9, seed=seed)
    assert np.allclose(unbiased_cov(s), np.diag([3.0, 1.0, 0.5]), atol=1e-12)
    assert math.isclose(s.data[:, 1].mean(), 5.0, rel_tol=1e-14)
