"""SVD baselines: the rotation split and both classical basis estimators."""

from __future__ import annotations

import numpy as np
import pytest

from ruvgamma import (
    ExpressionMatrix,
    RotationPair,
    StudyDesign,
    build_rotation,
    max_principal_angle,
    ruv2,
    ruv4,
)


def _wrap(values) -> ExpressionMatrix:
    v = np.asarray(values, dtype=float)
    return ExpressionMatrix(
        v,
        tuple(f"g{j}" for j in range(v.shape[1])),
        tuple(f"s{i}" for i in range(v.shape[0])),
    )


def _planted_problem(noise: float, seed: int = 7, n: int = 20, p: int = 60, k: int = 3):
    """Y = x beta + W alpha + noise with controls on the last 30 genes."""
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, n).astype(float)
    x -= x.mean()
    w_true = rng.normal(size=(n, k))
    alpha = rng.normal(size=(k, p))
    beta = np.zeros(p)
    beta[: p // 4] = rng.normal(1.0, 0.2, p // 4)
    y = np.outer(x, beta) + w_true @ alpha + noise * rng.normal(size=(n, p))
    controls = tuple(range(p - 30, p))
    design = StudyDesign(x, controls, k=k)
    return _wrap(y), design, w_true


def _centered_span(w: np.ndarray) -> np.ndarray:
    return w - w.mean(axis=0, keepdims=True)


# ----------------------------------------------------------------- rotation


def test_build_rotation_axis_covariate():
    rot = build_rotation(np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(rot.r1[:, 0], [1.0, 0.0, 0.0], atol=1e-12)
    assert rot.r0.shape == (3, 2)
    np.testing.assert_allclose(rot.r0.T @ rot.r1, 0.0, atol=1e-12)


def test_build_rotation_diagonal_covariate():
    rot = build_rotation(np.array([1.0, 1.0]) / np.sqrt(2.0))
    np.testing.assert_allclose(rot.r1[:, 0], [1.0 / np.sqrt(2.0)] * 2, atol=1e-12)
    np.testing.assert_allclose(np.abs(rot.r0[:, 0]), [1.0 / np.sqrt(2.0)] * 2, atol=1e-12)
    assert abs(rot.r0[0, 0] + rot.r0[1, 0]) < 1e-12


def test_build_rotation_orthogonality_random():
    rng = np.random.default_rng(6)
    x = rng.normal(size=6)
    rot = build_rotation(x)
    assert np.max(np.abs(rot.r0.T @ x)) < 1e-10
    np.testing.assert_allclose(rot.r0.T @ rot.r0, np.eye(5), atol=1e-10)
    full = np.hstack([rot.r0, rot.r1])
    np.testing.assert_allclose(full.T @ full, np.eye(6), atol=1e-10)
    # r1 reproduces the normalized covariate
    np.testing.assert_allclose(rot.r1[:, 0], x / np.linalg.norm(x), atol=1e-10)


def test_build_rotation_rejects_degenerate_covariate():
    with pytest.raises(ValueError, match="degenerate covariate"):
        build_rotation(np.zeros(4))


def test_rotation_pair_validates_orthogonality():
    with pytest.raises(ValueError):
        RotationPair(r0=np.ones((3, 2)), r1=np.ones((3, 1)))
    with pytest.raises(ValueError):
        RotationPair(r0=np.eye(3)[:, :1], r1=np.eye(3)[:, :1])


# --------------------------------------------------------------------- ruv2


def test_ruv2_exact_rank_one_block():
    rng = np.random.default_rng(15)
    u = rng.normal(size=8)
    u -= u.mean()  # survives the internal column-centering
    u /= np.linalg.norm(u)
    v = rng.normal(size=10)
    y = np.outer(u, v)
    full = np.column_stack([y, rng.normal(size=(8, 6))])
    design = StudyDesign(rng.normal(size=8), tuple(range(10)), k=1)
    fe = ruv2(_wrap(full), design)
    assert fe.q == 1
    direction = fe.w_hat[:, 0]
    assert abs(abs(direction @ u) - 1.0) < 1e-10


def test_ruv2_columns_orthonormal():
    y, design, _ = _planted_problem(noise=0.5)
    fe = ruv2(y, design)
    gram = fe.w_hat.T @ fe.w_hat
    assert np.max(np.abs(gram - np.eye(design.k))) < 1e-10
    assert fe.method == "ruv2"


def test_ruv2_noiseless_recovers_centered_span():
    y, design, w_true = _planted_problem(noise=0.0)
    fe = ruv2(y, design)
    assert max_principal_angle(fe.w_hat, _centered_span(w_true)) < 1e-8


def test_ruv2_rank_failure_is_reported():
    rng = np.random.default_rng(2)
    u = rng.normal(size=6)
    y = np.column_stack([np.outer(u, rng.normal(size=4)), rng.normal(size=(6, 4))])
    design = StudyDesign(rng.normal(size=6), tuple(range(4)), k=2)
    with pytest.raises(ValueError, match="rank < k"):
        ruv2(_wrap(y), design)


def test_ruv2_deterministic_sign_gauge():
    y, design, _ = _planted_problem(noise=0.3)
    a = ruv2(y, design)
    b = ruv2(y, design)
    np.testing.assert_array_equal(a.w_hat, b.w_hat)
    for j in range(a.q):
        col = a.w_hat[:, j]
        assert col[np.argmax(np.abs(col))] >= 0


# --------------------------------------------------------------------- ruv4


def test_ruv4_noiseless_recovers_centered_span():
    y, design, w_true = _planted_problem(noise=0.0)
    fe = ruv4(y, design)
    assert fe.method == "ruv4"
    assert max_principal_angle(fe.w_hat, _centered_span(w_true)) < 1e-8


def test_ruv4_backsolve_exact_when_x_orthogonal_to_w():
    rng = np.random.default_rng(23)
    n, p, k = 16, 40, 2
    x = rng.normal(size=n)
    x -= x.mean()
    # build W in the orthogonal complement of x, centered
    basis = build_rotation(x).r0
    w_true = basis @ rng.normal(size=(n - 1, k))
    w_true -= w_true.mean(axis=0, keepdims=True)
    alpha = rng.normal(size=(k, p))
    y = w_true @ alpha  # beta = 0 everywhere, no noise
    design = StudyDesign(x, tuple(range(p - 25, p)), k=k)
    fe = ruv4(_wrap(y), design)
    assert max_principal_angle(fe.w_hat, w_true) < 1e-8
    # the span(x) component of the estimate matches W's (zero here)
    r1 = build_rotation(x).r1
    np.testing.assert_allclose(r1.T @ fe.w_hat, r1.T @ w_true, atol=1e-8)


def test_ruv4_noise_ladder_monotone_for_both_methods():
    angles2, angles4 = [], []
    for noise in (0.0, 0.05, 0.5):
        y, design, w_true = _planted_problem(noise=noise)
        target = _centered_span(w_true)
        angles2.append(max_principal_angle(ruv2(y, design).w_hat, target))
        angles4.append(max_principal_angle(ruv4(y, design).w_hat, target))
    assert angles2[0] < angles2[1] < angles2[2]
    assert angles4[0] < angles4[1] < angles4[2]
    assert angles2[0] < 1e-8 and angles4[0] < 1e-8


def test_ruv4_rejects_k_larger_than_rotated_space():
    rng = np.random.default_rng(31)
    n, p = 5, 12
    y = rng.normal(size=(n, p))
    design = StudyDesign(rng.normal(size=n), tuple(range(p - 7, p)), k=5)
    with pytest.raises(ValueError, match="rotated space"):
        ruv4(_wrap(y), design)


def test_control_index_range_is_checked():
    rng = np.random.default_rng(1)
    y = _wrap(rng.normal(size=(6, 8)))
    design = StudyDesign(rng.normal(size=6), (5, 6, 7, 8), k=1)
    with pytest.raises(ValueError, match="out of range"):
        ruv2(y, design)
