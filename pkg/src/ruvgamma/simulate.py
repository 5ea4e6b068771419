"""Synthetic expression data with known unwanted variation and outliers.

The clean matrix is ``Y0 = 1 delta^T + x beta^T + W alpha + eps`` with

* ``x`` Bernoulli(0.5) group labels (uncentered; estimators center
  downstream);
* ``W = [W1, W2]``: W1 one-hot batch indicators over 5 batches encoded in 4
  columns (the 5th batch is the all-zero reference row), W2 = 2 x zeta^T + E
  with zeta uniform on the unit sphere in 3 dims and E standard normal. The
  2:1 scaling makes the group label explain 25% of the variance of each W2
  coordinate (4 * Var(x) * zeta_l^2 summed over l = 1 against noise
  variance 3 ... per-block decomposition; the batch block is
  label-independent);
* ``delta_j ~ N(0, 2^2)``, ``beta_j ~ N(1, 0.2^2)`` for the first ``n_de``
  genes (0 elsewhere), ``alpha_j ~ N(0, I_7)``,
  ``sigma_j^2 ~ InvGamma(shape 3, rate 0.5)`` so mean and variance are 1.

Structured outliers: ``O = [x, W1] Zo + Eo`` with ``Zo`` entries
``N(0, sigma_o^2)`` and ``Eo`` standard normal; ``round(p (1 - sqrt(pi_o)))``
columns are zeroed, then surviving elements are independently zeroed with
probability ``1 - sqrt(pi_o)``, leaving an expected fraction ``pi_o`` of
contaminated entries. ``Y = Y0 + O``.

Every random block draws from its own counter-based Philox stream spawned
from the scenario seed, so each block is independently reproducible and the
whole GroundTruth is bit-identical across runs for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .model import ExpressionMatrix

#: structural dimension of the unwanted-variation design: 4 batch indicator
#: columns plus 3 correlated-noise columns
K_TRUE = 7

# stream indices for SeedSequence spawn keys, one per random block
_STREAMS = {
    "x": 0,
    "batches": 1,
    "zeta": 2,
    "w2_noise": 3,
    "delta": 4,
    "beta": 5,
    "alpha": 6,
    "sigma2": 7,
    "eps": 8,
    "outlier_coef": 9,
    "outlier_noise": 10,
    "outlier_columns": 11,
    "outlier_elements": 12,
}


def _rng(seed: int, block: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(_STREAMS[block],))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ScenarioSpec:
    """Simulation scenario parameters. Controls are the last ``n_controls`` genes."""

    n: int
    p: int
    n_de: int = 100
    pi_o: float = 0.0
    sigma_o: float = 1.0
    n_controls: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 samples and p >= 1 genes")
        if self.n_de < 0 or self.n_controls < 1:
            raise ValueError("n_de must be >= 0 and n_controls >= 1")
        if self.n_de + self.n_controls > self.p:
            raise ValueError("n_de + n_controls must not exceed p")
        if not (0.0 <= self.pi_o <= 1.0):
            raise ValueError("pi_o must lie in [0, 1]")
        if self.sigma_o < 0:
            raise ValueError("sigma_o must be nonnegative")

    @property
    def control_indices(self) -> Tuple[int, ...]:
        return tuple(range(self.p - self.n_controls, self.p))

    @property
    def de_indices(self) -> Tuple[int, ...]:
        return tuple(range(self.n_de))


@dataclass(frozen=True)
class GroundTruth:
    """Generated data with every latent quantity retained."""

    x: np.ndarray
    w: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    sigma2: np.ndarray
    contamination_mask: np.ndarray
    y0: ExpressionMatrix
    y: ExpressionMatrix


def _gene_ids(p: int) -> Tuple[str, ...]:
    width = len(str(p))
    return tuple(f"g{j + 1:0{width}d}" for j in range(p))


def _sample_ids(n: int) -> Tuple[str, ...]:
    width = len(str(n))
    return tuple(f"s{i + 1:0{width}d}" for i in range(n))


def generate(spec: ScenarioSpec) -> GroundTruth:
    """Draw one scenario; applies ``inject_outliers`` when ``pi_o > 0``."""
    n, p = spec.n, spec.p
    x = _rng(spec.seed, "x").integers(0, 2, n).astype(float)

    batches = _rng(spec.seed, "batches").integers(0, 5, n)
    w1 = np.zeros((n, 4))
    for b in range(4):
        w1[batches == b, b] = 1.0

    zeta = _rng(spec.seed, "zeta").normal(size=3)
    zeta /= np.linalg.norm(zeta)
    w2 = 2.0 * np.outer(x, zeta) + _rng(spec.seed, "w2_noise").normal(size=(n, 3))
    w = np.hstack([w1, w2])

    delta = _rng(spec.seed, "delta").normal(0.0, 2.0, p)
    beta = np.zeros(p)
    if spec.n_de:
        beta[: spec.n_de] = _rng(spec.seed, "beta").normal(1.0, 0.2, spec.n_de)
    alpha = _rng(spec.seed, "alpha").normal(size=(K_TRUE, p))
    # inverse-gamma(shape 3, rate 0.5): reciprocal of Gamma(shape 3, scale 0.5)
    sigma2 = 1.0 / _rng(spec.seed, "sigma2").gamma(3.0, 0.5, p)
    eps = _rng(spec.seed, "eps").normal(size=(n, p)) * np.sqrt(sigma2)

    y0_values = delta + np.outer(x, beta) + w @ alpha + eps
    gids, sids = _gene_ids(p), _sample_ids(n)
    y0 = ExpressionMatrix(y0_values, gids, sids)
    gt = GroundTruth(
        x=x,
        w=w,
        beta=beta,
        delta=delta,
        alpha=alpha,
        sigma2=sigma2,
        contamination_mask=np.zeros((n, p), dtype=bool),
        y0=y0,
        y=y0,
    )
    if spec.pi_o > 0:
        gt = inject_outliers(gt, spec)
    return gt


def inject_outliers(gt: GroundTruth, spec: ScenarioSpec) -> GroundTruth:
    """Add the structured outlier matrix to ``y0``; returns an updated copy.

    The element-stage Bernoulli draws are made only for surviving columns,
    which keeps the stream layout deterministic for a fixed seed.
    """
    n, p = spec.n, spec.p
    if spec.pi_o <= 0:
        return replace(gt, y=gt.y0, contamination_mask=np.zeros((n, p), dtype=bool))
    structure = np.hstack([gt.x[:, None], gt.w[:, :4]])
    coef = _rng(spec.seed, "outlier_coef").normal(0.0, spec.sigma_o, (5, p))
    noise = _rng(spec.seed, "outlier_noise").normal(size=(n, p))
    o = structure @ coef + noise

    keep_sqrt = np.sqrt(spec.pi_o)
    n_zero_cols = round(p * (1.0 - keep_sqrt))
    zero_cols = _rng(spec.seed, "outlier_columns").choice(p, size=n_zero_cols, replace=False)
    o[:, zero_cols] = 0.0
    surviving = np.setdiff1d(np.arange(p), zero_cols)
    if surviving.size:
        elem_zero = _rng(spec.seed, "outlier_elements").random((n, surviving.size)) < (1.0 - keep_sqrt)
        rows, cols = np.where(elem_zero)
        o[rows, surviving[cols]] = 0.0

    mask = o != 0.0
    y = ExpressionMatrix(gt.y0.values + o, gt.y0.gene_ids, gt.y0.sample_ids)
    return replace(gt, y=y, contamination_mask=mask)
