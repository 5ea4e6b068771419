"""Robust multivariate location/scatter estimation by gamma-weighted fixed point.

Each centered control-gene column is treated as one observation vector in
sample space. The estimator solves

    mu    = sum_j w_j y_j / sum_j w_j
    sigma = (gamma + 1) * sum_j w_j (y_j - mu)(y_j - mu)^T / sum_j w_j

where ``w_j`` is the multivariate normal density at ``y_j`` under the current
``(mu, sigma)`` raised to the power gamma. Observations that sit far from the
bulk (contaminated genes) receive exponentially small weight, so the top
eigenvectors of ``sigma`` recover the unwanted-variation span even under
heavy contamination. At ``gamma = 0`` the weights are uniform and the fixed
point is the sample mean and covariance (divisor m).

Weight computation happens in the log domain: within one iteration all
observations share ``sigma``, so the normalizing constant and log-determinant
are common to every ``w_j`` and cancel after normalization; only the
Mahalanobis exponent matters. The maximum log-weight is subtracted before
exponentiation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ._linalg import fix_column_signs
from .model import FactorEstimate, GammaConfig

# relative spectral gap under which eigenvalues count as tied
TIE_RTOL = 1e-8


@dataclass(frozen=True)
class LocationScatter:
    """Fitted location vector, scatter matrix, and per-observation weights."""

    mu: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray
    iterations: int
    converged: bool
    notes: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float)
        sig = np.asarray(self.sigma, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        n = mu.size
        if sig.shape != (n, n):
            raise ValueError("sigma shape does not match mu")
        if np.max(np.abs(sig - sig.T)) > 1e-10 * max(1.0, float(np.max(np.abs(sig)))):
            raise ValueError("sigma must be symmetric")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0) or np.any(w > 1):
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "weights", w)


def fit_location_scatter(yc: np.ndarray, cfg: GammaConfig) -> LocationScatter:
    """Run the gamma-weighted location/scatter fixed point.

    Parameters
    ----------
    yc : array, shape (n, m)
        Centered control submatrix: each of the m columns is one observation
        vector in n dimensions (genes as observations, samples as
        coordinates).
    cfg : GammaConfig
        gamma, convergence tolerance, iteration cap, relative ridge.

    Returns
    -------
    LocationScatter
        Fixed point within ``cfg.tol`` (relative change in mu and the
        Frobenius norm of sigma), or the last iterate flagged
        ``converged=False``. Normalized weights are recorded for
        diagnostics. Ridge additions are noted in ``notes``.
    """
    yc = np.asarray(yc, dtype=float)
    if yc.ndim != 2:
        raise ValueError("yc must be a 2-d matrix of observation columns")
    n, m = yc.shape
    if m < 2:
        raise ValueError("need at least 2 observation vectors")
    if m <= n:
        warnings.warn(
            f"only {m} observations in {n} dimensions; the scatter fit is ridge-regularized",
            stacklevel=2,
        )
    obs = np.ascontiguousarray(yc.T)  # (m, n) rows are observations

    mu = np.median(obs, axis=0)
    mad = np.median(np.abs(obs - mu), axis=0) * 1.4826
    sigma = np.diag(mad**2)

    gamma = cfg.gamma
    notes = []
    ridged = False
    weights = np.full(m, 1.0 / m)
    it = 0
    converged = False
    for it in range(1, cfg.max_iter + 1):
        sigma_in = sigma
        evals, evecs = np.linalg.eigh(sigma)
        lam_max = float(evals[-1])
        if m <= n or lam_max <= 0 or evals[0] < 1e-12 * lam_max:
            tr = float(np.trace(sigma))
            lam = cfg.ridge * (tr / n if tr > 0 else 1.0)
            sigma = sigma + lam * np.eye(n)
            evals = evals + lam
            if not ridged:
                notes.append("ridge added to ill-conditioned scatter iterate")
                ridged = True
        # Mahalanobis distances through the eigendecomposition of sigma
        t = (obs - mu) @ evecs / np.sqrt(np.maximum(evals, 1e-300))
        d2 = np.einsum("ij,ij->i", t, t)
        logw = -0.5 * gamma * d2
        w = np.exp(logw - logw.max())
        w /= w.sum()

        mu_new = w @ obs
        dev = obs - mu_new
        sigma_new = (gamma + 1.0) * (dev.T * w) @ dev
        sigma_new = 0.5 * (sigma_new + sigma_new.T)

        # convergence is measured between successive update outputs, not
        # against the ridge-shifted input, so a degenerate zero scatter can
        # still register as a fixed point
        d_mu = np.linalg.norm(mu_new - mu) / (1.0 + np.linalg.norm(mu))
        d_sig = np.linalg.norm(sigma_new - sigma_in, "fro") / (
            1.0 + np.linalg.norm(sigma_in, "fro")
        )
        mu, sigma, weights = mu_new, sigma_new, w
        if max(d_mu, d_sig) < cfg.tol:
            converged = True
            break
    if not converged:
        notes.append("iteration cap reached before the fixed point")

    # the returned sigma must satisfy the LocationScatter invariants even in
    # the degenerate all-identical case, where the scatter is exactly zero
    if np.trace(sigma) <= 0:
        lam = cfg.ridge if cfg.ridge > 0 else 1e-8
        sigma = sigma + lam * np.eye(n)
        if "ridge added to ill-conditioned scatter iterate" not in notes:
            notes.append("ridge added to ill-conditioned scatter iterate")
    return LocationScatter(
        mu=mu, sigma=sigma, weights=weights, iterations=it, converged=converged, notes=tuple(notes)
    )


def extract_basis(ls: LocationScatter, k: int) -> FactorEstimate:
    """Assemble the robust basis: location column plus top-k eigenvectors.

    Returns an ``(n, k+1)`` FactorEstimate whose first column is ``mu`` and
    whose remaining columns are the leading eigenvectors of ``sigma`` in
    descending eigenvalue order, sign-fixed for reproducibility. The
    ``eigenvalues`` field carries the full descending spectrum for
    k-selection diagnostics.
    """
    n = ls.mu.size
    if not (isinstance(k, (int, np.integer)) and 1 <= k < n):
        raise ValueError(f"k must satisfy 1 <= k < n={n}")
    evals, evecs = np.linalg.eigh(ls.sigma)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if evals[k - 1] < -1e-10 * max(1.0, abs(float(evals[0]))):
        raise ValueError("scatter has fewer than k nonnegative eigenvalues")
    notes = list(ls.notes)
    if k < n and (evals[k - 1] - evals[k]) <= TIE_RTOL * max(abs(float(evals[0])), 1e-300):
        notes.append("eigenvalue tie at cut position k")
    basis = fix_column_signs(evecs[:, :k])
    w = np.column_stack([ls.mu, basis])
    return FactorEstimate(
        w_hat=w,
        method="gamma_ruv",
        eigenvalues=np.maximum(evals, 0.0),
        iterations=ls.iterations,
        converged=ls.converged,
        notes=tuple(notes),
    )


def eigenvalue_ratios(ls: LocationScatter) -> np.ndarray:
    """Cumulative eigenvalue ratios ``r_m`` of the scatter spectrum.

    Negative eigenvalues are clamped to zero before summation; the result is
    nondecreasing with final entry 1. Raises on an all-zero spectrum.
    """
    evals = np.linalg.eigvalsh(ls.sigma)[::-1]
    evals = np.clip(evals, 0.0, None)
    total = evals.sum()
    if total <= 0:
        raise ValueError("null scatter")
    return np.cumsum(evals) / total
