"""Gamma-weighted location/scatter fixed point and basis extraction."""

from __future__ import annotations

import numpy as np
import pytest

from ruvgamma import (
    GammaConfig,
    LocationScatter,
    eigenvalue_ratios,
    extract_basis,
    fit_location_scatter,
    max_principal_angle,
)


def _toy_with_outliers(seed: int = 11) -> np.ndarray:
    """50 points from N(0, I2) plus 5 planted at (20, 20), as observation columns."""
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(size=(50, 2)), np.full((5, 2), 20.0)])
    return pts.T


def _fit(yc, **kw):
    return fit_location_scatter(yc, GammaConfig(**kw))


# ------------------------------------------------------------ KL/MLE limit


def test_gamma_zero_is_sample_mean_and_covariance():
    rng = np.random.default_rng(0)
    yc = rng.normal(size=(4, 40))
    ls = _fit(yc, gamma=0.0)
    np.testing.assert_allclose(ls.mu, yc.mean(axis=1), atol=1e-8)
    np.testing.assert_allclose(ls.sigma, np.cov(yc, bias=True), atol=1e-8)


def test_kl_limit_small_gamma_random_inputs():
    rng = np.random.default_rng(42)
    for _ in range(5):
        yc = rng.normal(size=(8, 30)) * rng.uniform(0.5, 2.0, size=(8, 1))
        ls = _fit(yc, gamma=1e-8)
        mean = yc.mean(axis=1)
        cov = np.cov(yc, bias=True)
        assert np.linalg.norm(ls.mu - mean) / (1.0 + np.linalg.norm(mean)) < 1e-6
        assert np.linalg.norm(ls.sigma - cov) / (1.0 + np.linalg.norm(cov)) < 1e-6


# ------------------------------------------------------- contaminated toys


def test_planted_outliers_are_suppressed():
    yc = _toy_with_outliers()
    m = yc.shape[1]
    naive = _fit(yc, gamma=0.0)
    robust = _fit(yc, gamma=0.5)
    # the 5-point cluster at (20, 20) drags the plain mean by about 1.8 per
    # coordinate while the weighted fit stays near the origin
    assert np.linalg.norm(naive.mu) > 1.5
    assert np.linalg.norm(robust.mu) < 0.5
    assert robust.converged
    # every planted outlier ends up with a vanishing share of the weight
    assert np.all(robust.weights[-5:] < 1.0 / (10.0 * m))


def test_identical_observations_degenerate_path():
    v = np.array([1.0, -2.0, 0.5])
    yc = np.tile(v[:, None], (1, 8))
    ls = _fit(yc, gamma=0.5)
    np.testing.assert_array_equal(ls.mu, v)
    np.testing.assert_allclose(ls.sigma, 1e-8 * np.eye(3), rtol=1e-12, atol=0.0)
    assert "ridge added to ill-conditioned scatter iterate" in ls.notes


def test_warns_when_observations_do_not_outnumber_dimensions():
    rng = np.random.default_rng(1)
    with pytest.warns(UserWarning, match="observations"):
        _fit(rng.normal(size=(5, 4)), gamma=0.5)


def test_result_satisfies_weight_and_symmetry_invariants():
    ls = _fit(_toy_with_outliers(), gamma=0.5)
    assert abs(ls.weights.sum() - 1.0) <= 1e-12
    assert np.all(ls.weights >= 0.0)
    assert np.all(ls.weights <= 1.0)
    assert np.max(np.abs(ls.sigma - ls.sigma.T)) < 1e-10
    assert np.linalg.eigvalsh(ls.sigma).min() >= -1e-10


def test_returned_estimate_is_a_fixed_point():
    yc = _toy_with_outliers()
    cfg = GammaConfig(gamma=0.5)
    ls = _fit(yc, gamma=0.5)
    assert ls.converged and not ls.notes
    obs = yc.T
    # one more application of the update map must reproduce (mu, sigma)
    evals, evecs = np.linalg.eigh(ls.sigma)
    t = (obs - ls.mu) @ evecs / np.sqrt(evals)
    d2 = np.einsum("ij,ij->i", t, t)
    logw = -0.5 * cfg.gamma * d2
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mu_rhs = w @ obs
    dev = obs - mu_rhs
    sigma_rhs = (cfg.gamma + 1.0) * (dev.T * w) @ dev
    assert np.linalg.norm(mu_rhs - ls.mu) / (1.0 + np.linalg.norm(ls.mu)) < 100 * cfg.tol
    assert (
        np.linalg.norm(sigma_rhs - ls.sigma, "fro") / (1.0 + np.linalg.norm(ls.sigma, "fro"))
        < 100 * cfg.tol
    )


def test_affine_equivariance_of_location():
    yc = _toy_with_outliers()
    t = np.array([3.0, -7.0])
    a = _fit(yc, gamma=0.5)
    b = _fit(yc + t[:, None], gamma=0.5)
    np.testing.assert_allclose(b.mu, a.mu + t, atol=1e-10)
    np.testing.assert_allclose(b.sigma, a.sigma, atol=1e-10)
    assert a.iterations == b.iterations


def test_location_error_nonincreasing_in_gamma():
    # planted-outlier toy in the partial-suppression regime: gamma=0 absorbs
    # the cluster, gamma=0.1 only partially downweights it, gamma=0.5 removes
    # it, so the three error levels separate beyond Monte Carlo noise
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pts = np.vstack([rng.normal(size=(200, 2)), np.full((30, 2), 4.0)])
        errs = [np.linalg.norm(_fit(pts.T, gamma=g).mu) for g in (0.0, 0.1, 0.5)]
        hits += errs[0] >= errs[1] >= errs[2]
    assert hits >= 95


def test_input_validation():
    with pytest.raises(ValueError):
        _fit(np.zeros(5), gamma=0.5)
    with pytest.raises(ValueError):
        _fit(np.zeros((3, 1)), gamma=0.5)


# ---------------------------------------------------------- basis assembly


def test_extract_basis_diagonal_spectrum():
    mu = np.array([0.5, -0.5, 1.0])
    ls = LocationScatter(
        mu=mu,
        sigma=np.diag([3.0, 2.0, 1.0]),
        weights=np.full(4, 0.25),
        iterations=1,
        converged=True,
    )
    fe = extract_basis(ls, 2)
    assert fe.q == 3
    np.testing.assert_array_equal(fe.w_hat[:, 0], mu)
    np.testing.assert_allclose(fe.w_hat[:, 1], [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(fe.w_hat[:, 2], [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(fe.eigenvalues, [3.0, 2.0, 1.0])
    assert fe.method == "gamma_ruv"
    assert "eigenvalue tie at cut position k" not in fe.notes


def test_extract_basis_isotropic_tie_flag_and_determinism():
    ls = LocationScatter(
        mu=np.zeros(3),
        sigma=np.eye(3),
        weights=np.full(4, 0.25),
        iterations=1,
        converged=True,
    )
    a = extract_basis(ls, 2)
    b = extract_basis(ls, 2)
    assert "eigenvalue tie at cut position k" in a.notes
    np.testing.assert_array_equal(a.w_hat, b.w_hat)
    # columns remain orthonormal regardless of which tied pair was kept
    g = a.w_hat[:, 1:].T @ a.w_hat[:, 1:]
    np.testing.assert_allclose(g, np.eye(2), atol=1e-12)


def test_extract_basis_rejects_bad_k():
    ls = LocationScatter(
        mu=np.zeros(3),
        sigma=np.eye(3),
        weights=np.full(4, 0.25),
        iterations=1,
        converged=True,
    )
    with pytest.raises(ValueError):
        extract_basis(ls, 3)
    with pytest.raises(ValueError):
        extract_basis(ls, 0)


def test_basis_recovers_planted_span():
    # working model with a 3-column structure matrix and nonzero factor mean:
    # span([location, top-2 eigenvectors]) must match span(W)
    worst = 0.0
    for seed in range(100, 110):
        rng = np.random.default_rng(seed)
        q = np.linalg.qr(rng.normal(size=(20, 3)))[0]
        w_true = q * np.array([5.0, 4.0, 3.0])
        nu = rng.normal(size=(500, 3)) + np.array([1.0, -0.5, 2.0])
        yc = w_true @ nu.T + 0.3 * rng.normal(size=(20, 500))
        ls = _fit(yc, gamma=0.1)
        fe = extract_basis(ls, 2)
        worst = max(worst, max_principal_angle(fe.w_hat, w_true))
    assert worst < 0.1


# ------------------------------------------------------- eigenvalue ratios


def _scatter_with_spectrum(evals) -> LocationScatter:
    evals = np.asarray(evals, dtype=float)
    return LocationScatter(
        mu=np.zeros(evals.size),
        sigma=np.diag(evals),
        weights=np.full(4, 0.25),
        iterations=1,
        converged=True,
    )


def test_eigenvalue_ratios_examples():
    np.testing.assert_allclose(eigenvalue_ratios(_scatter_with_spectrum([3.0, 1.0])), [0.75, 1.0])
    np.testing.assert_allclose(
        eigenvalue_ratios(_scatter_with_spectrum([1.0, 1.0, 1.0, 1.0])),
        [0.25, 0.5, 0.75, 1.0],
    )


def test_eigenvalue_ratios_properties():
    ls = _fit(_toy_with_outliers(), gamma=0.5)
    r = eigenvalue_ratios(ls)
    assert np.all(np.diff(r) >= -1e-15)
    assert r[-1] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="null scatter"):
        eigenvalue_ratios(_scatter_with_spectrum([0.0, 0.0]))
