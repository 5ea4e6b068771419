"""Batched numpy implementation of the per-gene weighted regression loop.

Semantics match the compiled kernel in ``_gammafit.pyx``: genes iterate until
their own convergence and are then frozen, so per-gene results do not depend
on which other genes are still active.

Status codes: 0 converged, 1 iteration cap, 2 variance collapse,
3 degenerate zero-variance response.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def fit_genes(ygenes, z, gamma, max_iter, tol, collapse_rtol=1e-12):
    """Fit the gamma-weighted regression fixed point for each gene row.

    Parameters
    ----------
    ygenes : (p, n) array, gene rows
    z : (n, d) design matrix, full column rank
    gamma : float >= 0
    max_iter, tol : iteration cap and relative-change tolerance
    collapse_rtol : variance-collapse floor relative to Var(y_j)

    Returns
    -------
    eta : (p, d), sigma2 : (p,), weights : (p, n), iterations : (p,) int,
    status : (p,) int
    """
    yg = np.ascontiguousarray(ygenes, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    p, n = yg.shape
    d = z.shape[1]

    gram = z.T @ z
    eta = np.linalg.solve(gram, z.T @ yg.T).T  # (p, d) least-squares start
    resid = yg - eta @ z.T
    sigma2 = np.einsum("gn,gn->g", resid, resid) / n
    var_y = yg.var(axis=1)
    floor = collapse_rtol * var_y

    status = np.zeros(p, dtype=np.int64)
    iters = np.zeros(p, dtype=np.int64)
    # a constant response has ptp exactly 0 even when its computed variance
    # is rounding noise; either way the weight scale is meaningless
    degenerate = (np.ptp(yg, axis=1) == 0.0) | (sigma2 <= 1e-300)
    status[degenerate] = 3
    sigma2 = np.maximum(sigma2, 1e-300)

    active = ~degenerate
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.where(active)[0]
        ra = resid[idx]
        s2a = sigma2[idx]
        logw = -gamma * ra**2 / (2.0 * s2a[:, None])
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)

        a = np.einsum("gn,nc,nd->gcd", w, z, z)
        b = np.einsum("nc,gn->gc", z, w * yg[idx])
        try:
            eta_new = np.linalg.solve(a, b[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            # extreme weight concentration can make a gene's system singular;
            # fall back to a per-gene least-squares solve for this step
            eta_new = np.empty_like(b)
            for g in range(len(idx)):
                eta_new[g] = np.linalg.lstsq(a[g], b[g], rcond=None)[0]
        r_new = yg[idx] - eta_new @ z.T
        s2_new = (gamma + 1.0) * np.einsum("gn,gn->g", w, r_new**2)

        collapsed = s2_new < floor[idx]
        change = np.maximum(
            np.linalg.norm(eta_new - eta[idx], axis=1) / (1.0 + np.linalg.norm(eta[idx], axis=1)),
            np.abs(s2_new - s2a) / (1.0 + s2a),
        )
        eta[idx] = eta_new
        resid[idx] = r_new
        # collapsed genes keep the relative floor itself, so the recorded
        # scale (and the weights derived from it) is reproducible rather than
        # rounding noise
        s2_store = np.maximum(s2_new, 1e-300)
        s2_store[collapsed] = np.maximum(floor[idx][collapsed], 1e-300)
        sigma2[idx] = s2_store
        iters[idx] += 1

        done = (change < tol) & ~collapsed
        status[idx[collapsed]] = 2
        active[idx[collapsed | done]] = False

    still = active
    status[still] = 1

    # final weights from the returned iterate (uniform for degenerate genes)
    logw = -gamma * resid**2 / (2.0 * sigma2[:, None])
    weights = np.exp(logw - logw.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    weights[status == 3] = 1.0 / n
    return eta, sigma2, weights, iters, status
