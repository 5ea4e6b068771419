"""Classical SVD-based estimators of the unwanted-variation basis.

Two baselines over the per-gene model ``Y = 1 delta + X beta + W alpha + eps``:

* ``ruv2``: leading left singular vectors of the centered control-gene block.
* ``ruv4``: rotate sample space into (span(X), its complement), extract the
  factor structure from the complement via a best rank-k approximation, and
  recover the span(X) component of W by least squares on the controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import fix_column_signs, orthonormal_columns
from .model import ExpressionMatrix, FactorEstimate, StudyDesign, center_columns, center_vector

# relative gap below which adjacent singular/eigen values are reported as tied
TIE_RTOL = 1e-8
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class RotationPair:
    """Orthogonal split of sample space: span(r1) = span(covariates), r0 = rest."""

    r0: np.ndarray
    r1: np.ndarray

    def __post_init__(self) -> None:
        r0 = np.asarray(self.r0, dtype=float)
        r1 = np.asarray(self.r1, dtype=float)
        n = r0.shape[0]
        if r1.shape[0] != n or r0.shape[1] + r1.shape[1] != n:
            raise ValueError("[r0, r1] must form a square matrix")
        full = np.hstack([r0, r1])
        if np.max(np.abs(full.T @ full - np.eye(n))) > 1e-10:
            raise ValueError("[r0, r1] is not orthogonal")
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "r1", r1)


def build_rotation(x: np.ndarray) -> RotationPair:
    """Orthogonal rotation [r0, r1] with span(r1) equal to span of the covariates.

    Parameters
    ----------
    x : array, shape (n,) or (n, d)
        Centered covariate column(s). Must be nonzero (full column rank for
        d > 1).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0) or np.linalg.matrix_rank(x) < d:
        raise ValueError("degenerate covariate")
    # householder QR of [x, I] gives an orthonormal completion of span(x)
    q, _ = np.linalg.qr(np.hstack([x, np.eye(n)]))
    r1 = q[:, :d]
    r0 = q[:, d:n]
    # gauge: make r1 reproduce x/||x|| for the single-covariate case
    if d == 1 and r1[:, 0] @ x[:, 0] < 0:
        r1 = -r1
    return RotationPair(r0=r0, r1=r1)


def _top_k_svd(block: np.ndarray, k: int, what: str):
    """Thin SVD with rank check at k and tie diagnostics."""
    u, s, vt = np.linalg.svd(block, full_matrices=False)
    if k > s.size or s[0] == 0 or s[k - 1] <= RANK_RTOL * s[0]:
        raise ValueError(f"{what} rank < k")
    notes = []
    if k < s.size and (s[k - 1] - s[k]) <= TIE_RTOL * s[0]:
        notes.append("singular value tie at cut position k")
    return u, s, vt, tuple(notes)


def ruv2(y: ExpressionMatrix, design: StudyDesign) -> FactorEstimate:
    """Estimate the unwanted-variation basis from control genes alone.

    Returns the leading ``k`` left singular vectors of the column-centered
    control block as an ``(n, k)`` orthonormal basis.
    """
    design.check_against(y)
    ys = center_columns(y)
    block = ys.submatrix(design.controls)
    u, s, _, notes = _top_k_svd(block, design.k, "control matrix")
    w = fix_column_signs(u[:, : design.k])
    return FactorEstimate(w_hat=w, method="ruv2", notes=notes)


def ruv4(y: ExpressionMatrix, design: StudyDesign) -> FactorEstimate:
    """Covariate-aware baseline: factor extraction in the complement of span(X).

    The centered matrix is rotated by ``[r0, r1]``; the best rank-k
    approximation ``U_k V_k^T`` of ``r0^T Y*`` (with ``U_k`` orthonormal,
    ``V_k^T = S_k Vt_k`` carrying the singular values) supplies loadings
    ``alpha = V_k^T``, and the span(X) component of W is the least-squares
    solution of ``(r1^T Y*_controls) ~ alpha_controls``. The estimate is
    ``w = r0 U_k + r1 B`` with ``B`` that back-solve.
    """
    design.check_against(y)
    xs = center_vector(design.covariate)
    rot = build_rotation(xs)
    d = rot.r1.shape[1]
    n = y.n_samples
    if n - d < design.k:
        raise ValueError("rotated space smaller than k")
    ys = center_columns(y)
    b0 = rot.r0.T @ ys.values
    u, s, vt, notes = _top_k_svd(b0, design.k, "rotated matrix")
    uk = u[:, : design.k]
    # fix the gauge on uk and apply the same flips to the loadings
    signs = np.sign(uk[np.argmax(np.abs(uk), axis=0), np.arange(design.k)])
    signs[signs == 0] = 1.0
    uk = uk * signs
    alpha = (s[: design.k, None] * vt[: design.k]) * signs[:, None]
    a_c = alpha[:, design.controls]
    gram = a_c @ a_c.T
    ev = np.linalg.eigvalsh(gram)
    if ev[-1] <= 0 or ev[0] <= 1e-12 * ev[-1]:
        raise ValueError("control loadings rank-deficient")
    back = np.linalg.solve(gram, a_c @ (rot.r1.T @ ys.submatrix(design.controls)).T).T
    w = rot.r0 @ uk + rot.r1 @ back
    return FactorEstimate(w_hat=w, method="ruv4", notes=notes)
