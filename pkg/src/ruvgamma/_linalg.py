"""Small shared linear-algebra helpers."""

from __future__ import annotations

import numpy as np


def fix_column_signs(a: np.ndarray) -> np.ndarray:
    """Flip column signs so each column's largest-magnitude entry is nonnegative.

    Makes SVD/eigendecomposition output deterministic across runs and BLAS
    builds; returns a new array.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.size == 0:
        return a
    idx = np.argmax(np.abs(a), axis=0)
    signs = np.sign(a[idx, np.arange(a.shape[1])])
    signs[signs == 0] = 1.0
    return a * signs


def orthonormal_columns(a: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of span(a) via thin SVD; raises on rank deficiency."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] == 0:
        raise ValueError("need a 2-d matrix with at least one column")
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0 or s[-1] <= rank_tol * s[0]:
        raise ValueError("rank-deficient input")
    return u[:, : a.shape[1]]
