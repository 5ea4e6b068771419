"""Per-gene regression and testing: classical least squares and the robust
gamma-weighted variant, with a sandwich covariance for the robust test.

The regression model per gene is ``y_i = z_i^T eta + e_i`` with
``z_i = (1, x_i, w_i^T)^T``. The robust fit solves the fixed point

    eta    = (Z^T O Z)^{-1} Z^T O y
    sigma2 = (gamma + 1) * r^T O r / tr(O)

where ``O = diag(f(y_i | z_i)^gamma)`` are normal-density weights under the
current parameters. Residual outliers get exponentially small weight. At
``gamma = 0`` the weights are uniform and one step reproduces least squares
(variance divisor n rather than n - d; the test statistic uses the sandwich
variance, so the divisor convention does not affect p-values).

The per-gene statistic is ``beta_hat^2 / beta_var`` with
``beta_var = [S]_beta / n`` from the M-estimator sandwich, referred to a
chi-square with 1 degree of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ._backend import fit_genes
from .model import GammaConfig, StudyDesign, center_vector

#: iteration budget for the per-gene fixed point (the scatter stage uses
#: GammaConfig's own default of 500)
GENE_MAX_ITER = 200

_STATUS_NOTES = {
    0: "",
    1: "iteration cap reached",
    2: "variance collapse",
    3: "degenerate zero-variance response",
    4: "weighted system unsolvable",
}


@dataclass(frozen=True)
class RegressionDesign:
    """Design matrix ``[1, x, w...]`` with named column roles."""

    z: np.ndarray
    column_roles: Tuple[str, ...]

    def __post_init__(self) -> None:
        z = np.ascontiguousarray(self.z, dtype=float)
        if z.ndim != 2 or z.shape[0] <= z.shape[1]:
            raise ValueError("design must be n x d with n > d")
        if len(self.column_roles) != z.shape[1]:
            raise ValueError("one role per design column is required")
        s = np.linalg.svd(z, compute_uv=False)
        if s[0] == 0 or s[-1] <= 1e-10 * s[0]:
            raise ValueError("design matrix is rank-deficient")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "column_roles", tuple(self.column_roles))

    @property
    def beta_index(self) -> int:
        return self.column_roles.index("covariate")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]


def make_design(
    x: np.ndarray,
    w: Optional[np.ndarray] = None,
    *,
    check_location_column: bool = False,
) -> Tuple[RegressionDesign, Tuple[str, ...]]:
    """Assemble ``[1, centered x, centered unit-norm w columns]``.

    The unwanted columns are centered and scaled to unit norm for
    conditioning; this changes coefficients but not fitted values, tests, or
    the adjusted matrix (which is always computed with the same columns the
    fit used). Zero-norm columns are dropped. With
    ``check_location_column=True`` the first w column (the robust location
    direction) is additionally dropped if its angle to span(1, x) falls
    below 1e-6 radians, keeping the design full rank without changing span.

    Returns the design and a tuple of notes about dropped columns.
    """
    xs = center_vector(x)
    n = xs.size
    cols = [np.ones(n), xs]
    roles = ["intercept", "covariate"]
    notes: List[str] = []
    if w is not None:
        w = np.asarray(w, dtype=float)
        if w.ndim != 2 or w.shape[0] != n:
            raise ValueError("w must be n x q")
        wc = w - w.mean(axis=0, keepdims=True)
        qx = np.linalg.qr(np.column_stack([np.ones(n), xs]))[0]
        for j in range(wc.shape[1]):
            col = wc[:, j]
            nrm = np.linalg.norm(col)
            if nrm <= 1e-12 * max(1.0, float(np.max(np.abs(w)))):
                notes.append(f"unwanted column {j} dropped: numerically zero after centering")
                continue
            if check_location_column and j == 0:
                resid = col - qx @ (qx.T @ col)
                angle = np.arcsin(min(1.0, np.linalg.norm(resid) / nrm))
                if angle < 1e-6:
                    notes.append("location column dropped: collinear with span(1, x)")
                    continue
            cols.append(col / nrm)
            roles.append("unwanted")
    design = RegressionDesign(z=np.column_stack(cols), column_roles=tuple(roles))
    return design, tuple(notes)


@dataclass(frozen=True)
class GeneTest:
    """Fitted per-gene parameters and the robust test of the covariate effect."""

    eta: np.ndarray
    sigma2: float
    beta_var: float
    pvalue: float
    weights: np.ndarray
    converged: bool
    iterations: int = 0
    note: str = ""

    @property
    def beta_hat(self) -> float:
        # by construction the covariate coefficient sits at index 1
        return float(self.eta[1])


@dataclass(frozen=True)
class DeCallSet:
    """Genes called differentially expressed at the Bonferroni threshold."""

    indices: Tuple[int, ...]
    threshold: float


def _chi2_pvalue(beta: float, beta_var: float) -> float:
    stat = beta * beta / max(beta_var, 1e-300)
    return float(stats.chi2.sf(stat, 1))


def fit_lse(y_j: np.ndarray, design: RegressionDesign) -> GeneTest:
    """Classical least squares with normal-theory variance.

    ``sigma2`` uses the unbiased divisor ``n - d``; ``beta_var`` is the
    corresponding diagonal entry of ``sigma2 (Z^T Z)^{-1}``.
    """
    y = np.asarray(y_j, dtype=float).ravel()
    z = design.z
    n, d = z.shape
    if y.size != n:
        raise ValueError("gene column length does not match the design")
    gram = z.T @ z
    eta = np.linalg.solve(gram, z.T @ y)
    r = y - z @ eta
    rss = float(r @ r)
    sigma2 = max(rss / (n - d), 1e-300)
    gram_inv = np.linalg.inv(gram)
    bi = design.beta_index
    beta_var = max(sigma2 * gram_inv[bi, bi], 1e-300)
    pvalue = _chi2_pvalue(eta[bi], beta_var)
    return GeneTest(
        eta=eta,
        sigma2=sigma2,
        beta_var=beta_var,
        pvalue=pvalue,
        weights=np.full(n, 1.0 / n),
        converged=True,
        iterations=0,
    )


def fit_gamma_lse(
    y_j: np.ndarray, design: RegressionDesign, cfg: Optional[GammaConfig] = None
) -> GeneTest:
    """Robust per-gene fit; see the module docstring for the fixed point."""
    y = np.asarray(y_j, dtype=float).ravel()
    if y.size != design.n:
        raise ValueError("gene column length does not match the design")
    return fit_gamma_lse_genes(y[None, :], design, cfg)[0]


def fit_gamma_lse_genes(
    ygenes: np.ndarray, design: RegressionDesign, cfg: Optional[GammaConfig] = None
) -> List[GeneTest]:
    """Vectorized robust fit across many genes (rows of ``ygenes``)."""
    if cfg is None:
        cfg = GammaConfig(max_iter=GENE_MAX_ITER)
    yg = np.ascontiguousarray(ygenes, dtype=float)
    if yg.ndim != 2 or yg.shape[1] != design.n:
        raise ValueError("ygenes must be (p, n) matching the design")
    eta, sigma2, weights, iters, status = fit_genes(
        yg, design.z, cfg.gamma, cfg.max_iter, cfg.tol
    )
    ok = status != 3
    # a degenerate response carries no information about the covariate: its
    # test variance is infinite so the chi-square statistic is exactly 0 and
    # the p-value 1 (a floored variance would instead divide the rounding
    # noise in beta-hat by ~1e-300 and call the gene significant)
    beta_var = np.where(ok, 1e-300, np.inf)
    notes = [_STATUS_NOTES[int(s)] for s in status]
    if ok.any():
        idx = np.where(ok)[0]
        try:
            s_beta = _sandwich_beta_entries(yg[idx], design, eta[idx], sigma2[idx], cfg.gamma)
            beta_var[idx] = np.maximum(s_beta / design.n, 1e-300)
        except ValueError:
            # isolate the offending gene(s) instead of failing the batch
            for g in idx:
                try:
                    s_beta = _sandwich_beta_entries(
                        yg[g : g + 1], design, eta[g : g + 1], sigma2[g : g + 1], cfg.gamma
                    )
                    beta_var[g] = max(float(s_beta[0]) / design.n, 1e-300)
                except ValueError:
                    beta_var[g] = float("inf")
                    notes[g] = "non-identified fit"
    bi = design.beta_index
    out = []
    for g in range(yg.shape[0]):
        out.append(
            GeneTest(
                eta=eta[g],
                sigma2=float(sigma2[g]),
                beta_var=float(beta_var[g]),
                pvalue=_chi2_pvalue(eta[g, bi], float(beta_var[g])),
                weights=weights[g],
                converged=bool((status[g] == 0 or status[g] == 3) and notes[g] != "non-identified fit"),
                iterations=int(iters[g]),
                note=notes[g],
            )
        )
    return out


def _psi_batch(yg, z, eta, sigma2, gamma):
    """Estimating function per observation, for each gene.

    psi_i is the gradient in (eta, sigma2) of the gamma-divergence criterion
    summand, up to positive scalar factors that cancel in the sandwich: the
    density-power weight exp(s_i) is softmax-normalized and the overall gamma
    factor is dropped. At gamma = 0 this is exactly the normal log-likelihood
    score. Returns (p, n, d+1).
    """
    r = yg - eta @ z.T  # (p, n)
    s2 = sigma2[:, None]
    logw = -gamma * r**2 / (2.0 * s2) - gamma / (2.0 * (gamma + 1.0)) * np.log(s2)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    psi_eta = (w * r / s2)[:, :, None] * z[None, :, :]
    psi_s2 = w * (r**2 / (2.0 * s2**2) - 1.0 / (2.0 * (gamma + 1.0) * s2))
    return np.concatenate([psi_eta, psi_s2[:, :, None]], axis=2)


def _sandwich_matrices(yg, design, eta, sigma2, gamma):
    """Full (d+1)x(d+1) sandwich S = A^{-1} B A^{-T} for each gene row."""
    z = design.z
    p, n = yg.shape
    d = z.shape[1]
    psi = _psi_batch(yg, z, eta, sigma2, gamma)
    bmat = np.einsum("pnc,pnd->pcd", psi, psi) / n
    theta = np.concatenate([eta, sigma2[:, None]], axis=1)
    amat = np.empty((p, d + 1, d + 1))
    for c in range(d + 1):
        h = 1e-6 * (1.0 + np.abs(theta[:, c]))
        if c == d:
            # the variance coordinate must stay positive under the step
            h = np.minimum(h, 0.5 * theta[:, c])
        tp = theta.copy()
        tp[:, c] += h
        tm = theta.copy()
        tm[:, c] -= h
        mean_p = _psi_batch(yg, z, tp[:, :d], tp[:, d], gamma).mean(axis=1)
        mean_m = _psi_batch(yg, z, tm[:, :d], tm[:, d], gamma).mean(axis=1)
        amat[:, :, c] = -(mean_p - mean_m) / (2.0 * h[:, None])
    try:
        ainv = np.linalg.inv(amat)
    except np.linalg.LinAlgError as exc:
        raise ValueError("non-identified fit") from exc
    smat = ainv @ bmat @ np.transpose(ainv, (0, 2, 1))
    return 0.5 * (smat + np.transpose(smat, (0, 2, 1)))


def _sandwich_beta_entries(yg, design, eta, sigma2, gamma):
    smat = _sandwich_matrices(yg, design, eta, sigma2, gamma)
    bi = design.beta_index
    return smat[:, bi, bi]


def sandwich_covariance(fit: GeneTest, y_j: np.ndarray, design: RegressionDesign, cfg: GammaConfig) -> np.ndarray:
    """Sandwich covariance of the full per-gene parameter (eta, sigma2).

    ``B`` is the empirical outer-product moment of the estimating function at
    the fitted parameters; ``A`` is minus its mean Jacobian, computed by
    central finite differences with step ``1e-6 * (1 + |theta_c|)`` per
    coordinate. The symmetric part is returned. Raises "non-identified fit"
    when A is singular.
    """
    y = np.asarray(y_j, dtype=float).ravel()[None, :]
    eta = np.asarray(fit.eta, dtype=float)[None, :]
    s2 = np.array([fit.sigma2], dtype=float)
    return _sandwich_matrices(y, design, eta, s2, cfg.gamma)[0]


def call_de_genes(
    tests: Sequence[GeneTest],
    design: StudyDesign,
    *,
    exclude_controls: bool = False,
) -> DeCallSet:
    """Bonferroni calling: gene j is called when ``p_j < alpha / p``.

    ``p`` counts all supplied tests (controls included) to keep the
    family-wise threshold faithful; ``exclude_controls`` only removes control
    genes from the returned index set.
    """
    p = len(tests)
    if p == 0:
        raise ValueError("no tests supplied")
    threshold = design.fwer_alpha / p
    skip = set(design.controls) if exclude_controls else set()
    idx = tuple(
        j for j, t in enumerate(tests) if j not in skip and t.pvalue < threshold
    )
    return DeCallSet(indices=idx, threshold=threshold)
