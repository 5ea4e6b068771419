"""Parity between the compiled per-gene kernel and the numpy fallback."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from ruvgamma import KERNEL_BACKEND
from ruvgamma._gammafit_py import fit_genes as fit_genes_py

try:
    from ruvgamma._gammafit import fit_genes as fit_genes_c
except ImportError:
    fit_genes_c = None

needs_compiled = pytest.mark.skipif(
    fit_genes_c is None, reason="compiled kernel not built in this environment"
)


def _problem(p=40, n=30, d=4, seed=14):
    rng = np.random.default_rng(seed)
    z = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1))])
    yg = rng.normal(size=(p, n)) * rng.uniform(0.5, 2.0, size=(p, 1))
    # a contaminated band, a constant gene, and a noiseless gene
    yg[:3, :4] += 20.0
    yg[5] = 3.14
    yg[6] = z @ np.arange(1.0, d + 1.0)
    return yg, z


def test_python_kernel_status_codes():
    yg, z = _problem()
    eta, sigma2, weights, iters, status = fit_genes_py(yg, z, 0.5, 200, 1e-8)
    assert eta.shape == (40, 4)
    assert status[5] == 3  # constant response
    assert np.all(np.isin(status, [0, 1, 2, 3, 4]))
    ok = status == 0
    assert ok.sum() > 30
    np.testing.assert_allclose(weights[ok].sum(axis=1), 1.0, atol=1e-12)


def test_python_kernel_gamma_zero_is_single_step_least_squares():
    yg, z = _problem(p=10)
    eta, sigma2, _, iters, status = fit_genes_py(yg, z, 0.0, 200, 1e-8)
    ref = np.linalg.lstsq(z, yg.T, rcond=None)[0].T
    ok = status != 3
    np.testing.assert_allclose(eta[ok], ref[ok], atol=1e-9)
    # genes that converged normally report the divisor-n residual variance;
    # the noiseless gene collapses to the relative floor instead
    r = yg - eta @ z.T
    clean = status == 0
    np.testing.assert_allclose(
        sigma2[clean], np.einsum("pn,pn->p", r, r)[clean] / yg.shape[1], rtol=1e-8
    )
    assert status[6] == 2
    assert sigma2[6] == pytest.approx(1e-12 * yg[6].var(), rel=1e-12)


@needs_compiled
def test_backends_agree_on_mixed_battery():
    yg, z = _problem(p=100, n=40, d=6, seed=77)
    out_py = fit_genes_py(yg, z, 0.5, 200, 1e-8)
    out_c = fit_genes_c(yg, z, 0.5, 200, 1e-8)
    labels = ("eta", "sigma2", "weights", "iterations", "status")
    for name, a, b in zip(labels, out_py, out_c):
        if name in ("iterations", "status"):
            np.testing.assert_array_equal(a, b, err_msg=name)
        else:
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12, err_msg=name)


@needs_compiled
def test_backends_agree_across_gammas():
    yg, z = _problem(p=30, n=25, d=3, seed=5)
    for gamma in (0.0, 0.1, 0.5, 1.0):
        out_py = fit_genes_py(yg, z, gamma, 200, 1e-8)
        out_c = fit_genes_c(yg, z, gamma, 200, 1e-8)
        np.testing.assert_allclose(out_py[0], out_c[0], rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(out_py[1], out_c[1], rtol=1e-9, atol=1e-12)
        np.testing.assert_array_equal(out_py[4], out_c[4])


@needs_compiled
def test_compiled_backend_is_active_by_default():
    assert KERNEL_BACKEND == "compiled"


def test_force_python_environment_switch():
    code = "import ruvgamma; print(ruvgamma.KERNEL_BACKEND)"
    env = dict(os.environ, RUVGAMMA_FORCE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"


def test_batched_entry_point_rejects_bad_shapes():
    from ruvgamma import GammaConfig, fit_gamma_lse_genes, make_design

    rng = np.random.default_rng(3)
    design, _ = make_design(rng.normal(size=12))
    with pytest.raises(ValueError):
        fit_gamma_lse_genes(rng.normal(size=(4, 10)), design, GammaConfig())
    with pytest.raises(ValueError):
        fit_gamma_lse_genes(rng.normal(size=12), design, GammaConfig())
