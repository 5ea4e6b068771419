"""Shared data model: expression matrices, study designs, factor estimates.

Conventions used throughout the package:

* expression matrices are dense ``(n, p)`` float arrays with samples (chips)
  in rows and genes in columns;
* gene subsets are column index arrays into that layout;
* "centering" always means removing per-column means over samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ExpressionMatrix:
    """An ``(n, p)`` matrix of expression values with row/column labels.

    Parameters
    ----------
    values : array_like, shape (n, p)
        Finite expression values, typically on a log scale.
    gene_ids : sequence of str, length p
        Unique column labels.
    sample_ids : sequence of str, length n
        Unique row labels.
    """

    values: np.ndarray
    gene_ids: Tuple[str, ...]
    sample_ids: Tuple[str, ...]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be a 2-d matrix")
        n, p = v.shape
        if n < 2:
            raise ValueError("need at least 2 samples")
        if p < 1:
            raise ValueError("need at least 1 gene")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite (missing data is not supported)")
        gids = tuple(str(g) for g in self.gene_ids)
        sids = tuple(str(s) for s in self.sample_ids)
        if len(gids) != p:
            raise ValueError(f"gene_ids has {len(gids)} labels for {p} columns")
        if len(sids) != n:
            raise ValueError(f"sample_ids has {len(sids)} labels for {n} rows")
        if len(set(gids)) != p:
            raise ValueError("gene_ids must be unique")
        if len(set(sids)) != n:
            raise ValueError("sample_ids must be unique")
        object.__setattr__(self, "values", _freeze(v))
        object.__setattr__(self, "gene_ids", gids)
        object.__setattr__(self, "sample_ids", sids)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_genes(self) -> int:
        return self.values.shape[1]

    def submatrix(self, columns) -> np.ndarray:
        """Return the ``(n, len(columns))`` view-like slice of selected genes."""
        cols = np.asarray(columns, dtype=int)
        return self.values[:, cols]

    def with_values(self, values: np.ndarray) -> "ExpressionMatrix":
        """Same labels, new values (shape must match)."""
        v = np.asarray(values, dtype=float)
        if v.shape != self.values.shape:
            raise ValueError("replacement values must keep the original shape")
        return ExpressionMatrix(v, self.gene_ids, self.sample_ids)


@dataclass(frozen=True)
class StudyDesign:
    """Covariate of interest, control-gene set, and testing configuration.

    ``controls`` are column indices into the companion matrix; the range
    check against an actual matrix happens where both meet (estimators and
    the pipeline), since the design alone does not know ``p``.
    """

    covariate: np.ndarray
    controls: Tuple[int, ...]
    k: int
    fwer_alpha: float = 0.05

    def __post_init__(self) -> None:
        x = np.asarray(self.covariate, dtype=float).ravel()
        if x.size < 2:
            raise ValueError("covariate needs at least 2 entries")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariate must be finite")
        if np.ptp(x) == 0.0:
            raise ValueError("covariate is constant; the effect of interest is unidentifiable")
        ctl = tuple(int(c) for c in self.controls)
        if len(ctl) == 0:
            raise ValueError("control set is empty")
        if len(set(ctl)) != len(ctl):
            raise ValueError("control indices must be unique")
        if min(ctl) < 0:
            raise ValueError("control indices must be nonnegative")
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 1):
            raise ValueError("k must be a positive integer")
        if len(ctl) < self.k + 2:
            raise ValueError(f"need at least k+2={self.k + 2} control genes, got {len(ctl)}")
        if not (0.0 < float(self.fwer_alpha) < 1.0):
            raise ValueError("fwer_alpha must lie in (0, 1)")
        object.__setattr__(self, "covariate", _freeze(x))
        object.__setattr__(self, "controls", ctl)
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "fwer_alpha", float(self.fwer_alpha))

    def check_against(self, y: ExpressionMatrix) -> None:
        """Validate index ranges and lengths against a concrete matrix."""
        if len(self.covariate) != y.n_samples:
            raise ValueError("covariate length does not match the sample count")
        if max(self.controls) >= y.n_genes:
            raise ValueError("control index out of range")


@dataclass(frozen=True)
class FactorEstimate:
    """An estimated unwanted-variation basis.

    ``w_hat`` has ``q`` columns: ``q = k`` for the SVD baselines, ``q = k+1``
    for the robust estimator (location column plus k eigenvectors).
    ``eigenvalues`` carries the full descending scatter spectrum when the
    estimate came from the robust fit, else None.
    """

    w_hat: np.ndarray
    method: str
    eigenvalues: Optional[np.ndarray] = None
    iterations: int = 0
    converged: bool = True
    notes: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        w = np.asarray(self.w_hat, dtype=float)
        if w.ndim != 2:
            raise ValueError("w_hat must be 2-d")
        if not np.all(np.isfinite(w)):
            raise ValueError("w_hat must be finite")
        object.__setattr__(self, "w_hat", _freeze(w))
        if self.eigenvalues is not None:
            ev = np.asarray(self.eigenvalues, dtype=float).ravel()
            if np.any(np.diff(ev) > 1e-10 * max(1.0, abs(float(ev[0])) if ev.size else 1.0)):
                raise ValueError("eigenvalues must be nonincreasing")
            if ev.size and ev[-1] < -1e-10 * max(1.0, abs(float(ev[0]))):
                raise ValueError("eigenvalues must be nonnegative (up to round-off)")
            object.__setattr__(self, "eigenvalues", _freeze(ev))
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def q(self) -> int:
        return self.w_hat.shape[1]


@dataclass(frozen=True)
class GammaConfig:
    """Configuration of the gamma-weighted fixed-point fits.

    ``gamma = 0`` is legal and reproduces the non-robust estimators (sample
    mean/covariance, ordinary least squares). ``ridge`` is a relative
    coefficient: when a scatter iterate is ill-conditioned the amount added
    to the diagonal is ``ridge * trace(sigma)/n`` (``ridge`` itself when the
    trace vanishes). ``seed`` is reserved for stochastic initializers; the
    default initializer is deterministic and ignores it.
    """

    gamma: float = 0.5
    max_iter: int = 500
    tol: float = 1e-8
    ridge: float = 1e-8
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


def center_columns(y: ExpressionMatrix) -> ExpressionMatrix:
    """Remove each gene's mean over samples.

    Equivalent to the projection ``(I - 11^T/n) Y``. Idempotent up to
    floating round-off.
    """
    v = y.values - y.values.mean(axis=0, keepdims=True)
    return y.with_values(v)


def center_vector(x: np.ndarray) -> np.ndarray:
    """Remove the mean of a vector (length >= 2)."""
    v = np.asarray(x, dtype=float).ravel()
    if v.size < 2:
        raise ValueError("need at least 2 entries")
    return v - v.mean()
