"""Evaluation metrics: AUC over p-value groups, TP/FP counts, RLE chip
statistics, and principal angles for span-recovery diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import stats

from .model import ExpressionMatrix
from .regression import DeCallSet
from .simulate import GroundTruth


def auc_pvalues(p_de: np.ndarray, p_null: np.ndarray) -> float:
    """Probability that a DE gene's p-value ranks below a null gene's.

    Mann-Whitney estimator with the 1/2 tie correction (average ranks).
    """
    a = np.asarray(p_de, dtype=float).ravel()
    b = np.asarray(p_null, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both p-value groups must be nonempty")
    ranks = stats.rankdata(np.concatenate([a, b]))
    r_de = ranks[: a.size].sum()
    # number of (de, null) pairs with de ranked lower, ties counting half
    wins = a.size * b.size + a.size * (a.size + 1) / 2.0 - r_de
    return float(wins / (a.size * b.size))


def tp_fp(calls: DeCallSet, truth: GroundTruth) -> Tuple[int, int]:
    """True/false positive counts of a call set against the generating truth."""
    de = {j for j, bj in enumerate(truth.beta) if bj != 0.0}
    called = set(calls.indices)
    tp = len(called & de)
    return tp, len(called) - tp


@dataclass(frozen=True)
class RleSummary:
    """Per-chip relative log expression statistics.

    Each chip's record summarizes ``{y_ij - m_j}_j`` where ``m_j`` is gene
    j's median over chips: median, first and third quartile, and IQR.
    """

    medians: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    iqr: np.ndarray
    mean_iqr: float
    gene_medians: np.ndarray


def rle_summary(adjusted: ExpressionMatrix) -> RleSummary:
    """Relative log expression summary of an (adjusted) matrix.

    Quartiles use linear interpolation (the numpy default), fixed so IQR
    values are comparable across runs. Adding a constant to a gene's column
    shifts its median by the same amount and leaves every chip statistic
    unchanged.
    """
    v = adjusted.values
    m = np.median(v, axis=0)
    resid = v - m
    q1, med, q3 = np.percentile(resid, [25.0, 50.0, 75.0], axis=1)
    iqr = q3 - q1
    return RleSummary(
        medians=med,
        q1=q1,
        q3=q3,
        iqr=iqr,
        mean_iqr=float(iqr.mean()),
        gene_medians=m,
    )


def principal_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosines of the principal angles between span(a) and span(b).

    Returns the singular values of ``Qa^T Qb`` (orthonormalized inputs),
    nonincreasing, clipped to [0, 1]. Symmetric in argument order. Raises on
    rank-deficient input.
    """
    qa = _orth(a)
    qb = _orth(b)
    s = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.clip(s, 0.0, 1.0)


def max_principal_angle(a: np.ndarray, b: np.ndarray, degrees: bool = False) -> float:
    """Largest principal angle between the two spans (radians by default)."""
    cosines = principal_angles(a, b)
    ang = float(np.arccos(cosines[-1]))
    return float(np.degrees(ang)) if degrees else ang


def _orth(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if a.shape[1] == 0 or s[0] == 0 or s[-1] <= 1e-10 * s[0]:
        raise ValueError("rank-deficient basis")
    return u[:, : a.shape[1]]
