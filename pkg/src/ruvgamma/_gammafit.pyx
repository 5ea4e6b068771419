# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-gene weighted-regression loop.

Same contract as ``_gammafit_py.fit_genes``; see that module for the
reference semantics. Hot path: p genes x up to max_iter iterations of an
n x d weighted least-squares update with a hand-rolled Cholesky solve
(d is small, typically <= 12).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

BACKEND = "compiled"


cdef int _chol_solve(double[:, ::1] a, double[::1] b, double[::1] x,
                     double[:, ::1] l, int d) nogil:
    """Solve a x = b for SPD a via Cholesky. Returns 0 on success."""
    cdef int i, j, c
    cdef double s
    for i in range(d):
        for j in range(i + 1):
            s = a[i, j]
            for c in range(j):
                s -= l[i, c] * l[j, c]
            if i == j:
                if s <= 0.0:
                    return 1
                l[i, i] = sqrt(s)
            else:
                l[i, j] = s / l[j, j]
    # forward then backward substitution
    for i in range(d):
        s = b[i]
        for c in range(i):
            s -= l[i, c] * x[c]
        x[i] = s / l[i, i]
    for i in range(d - 1, -1, -1):
        s = x[i]
        for c in range(i + 1, d):
            s -= l[c, i] * x[c]
        x[i] = s / l[i, i]
    return 0


def fit_genes(ygenes, z, double gamma, int max_iter, double tol,
              double collapse_rtol=1e-12):
    """Compiled equivalent of ``_gammafit_py.fit_genes``."""
    cdef double[:, ::1] yg = np.ascontiguousarray(ygenes, dtype=np.float64)
    cdef double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t p = yg.shape[0]
    cdef Py_ssize_t n = yg.shape[1]
    cdef Py_ssize_t d = zz.shape[1]

    eta_np = np.zeros((p, d))
    sigma2_np = np.zeros(p)
    weights_np = np.zeros((p, n))
    iters_np = np.zeros(p, dtype=np.int64)
    status_np = np.zeros(p, dtype=np.int64)
    cdef double[:, ::1] eta = eta_np
    cdef double[::1] sigma2 = sigma2_np
    cdef double[:, ::1] weights = weights_np
    cdef long long[::1] iters = iters_np
    cdef long long[::1] status = status_np

    # scratch
    a_np = np.zeros((d, d)); l_np = np.zeros((d, d))
    b_np = np.zeros(d); x_np = np.zeros(d)
    e_np = np.zeros(d); r_np = np.zeros(n); w_np = np.zeros(n)
    cdef double[:, ::1] a = a_np
    cdef double[:, ::1] l = l_np
    cdef double[::1] b = b_np
    cdef double[::1] xshape = x_np
    cdef double[::1] ecur = e_np
    cdef double[::1] r = r_np
    cdef double[::1] w = w_np

    # shared least-squares start: gram = z^T z factored once
    gram_np = np.zeros((d, d))
    gl_np = np.zeros((d, d))
    cdef double[:, ::1] gram = gram_np
    cdef double[:, ::1] gl = gl_np
    cdef Py_ssize_t i, j, c, g, it
    cdef double s, mean_y, var_y, floor, s2, s2_new, mx, sw, ridge, mn_y, mx_y
    cdef double d_eta, n_eta, ch, fit
    cdef int info, attempt, stat

    for i in range(d):
        for j in range(i + 1):
            s = 0.0
            for c in range(n):
                s += zz[c, i] * zz[c, j]
            gram[i, j] = s
            gram[j, i] = s

    for g in range(p):
        # least-squares initialization
        for i in range(d):
            s = 0.0
            for c in range(n):
                s += zz[c, i] * yg[g, c]
            b[i] = s
        for i in range(d):
            for j in range(d):
                a[i, j] = gram[i, j]
        info = _chol_solve(a, b, ecur, gl, <int>d)
        if info != 0:
            raise np.linalg.LinAlgError("design matrix is rank-deficient")
        for i in range(d):
            eta[g, i] = ecur[i]
        s2 = 0.0
        mean_y = 0.0
        var_y = 0.0
        mn_y = yg[g, 0]
        mx_y = yg[g, 0]
        for c in range(n):
            fit = 0.0
            for i in range(d):
                fit += zz[c, i] * eta[g, i]
            r[c] = yg[g, c] - fit
            s2 += r[c] * r[c]
            mean_y += yg[g, c]
            if yg[g, c] < mn_y:
                mn_y = yg[g, c]
            if yg[g, c] > mx_y:
                mx_y = yg[g, c]
        s2 /= n
        mean_y /= n
        for c in range(n):
            var_y += (yg[g, c] - mean_y) * (yg[g, c] - mean_y)
        var_y /= n
        floor = collapse_rtol * var_y

        stat = 0
        # a constant response has max - min exactly 0 even when the computed
        # residual variance is rounding noise
        if mx_y - mn_y == 0.0 or s2 <= 1e-300:
            stat = 3
            s2 = 1e-300
        else:
            for it in range(max_iter):
                # normalized weights, log domain with max subtraction
                mx = -1e308
                for c in range(n):
                    w[c] = -gamma * r[c] * r[c] / (2.0 * s2)
                    if w[c] > mx:
                        mx = w[c]
                sw = 0.0
                for c in range(n):
                    w[c] = exp(w[c] - mx)
                    sw += w[c]
                for c in range(n):
                    w[c] /= sw

                # weighted normal equations
                for i in range(d):
                    s = 0.0
                    for c in range(n):
                        s += w[c] * zz[c, i] * yg[g, c]
                    b[i] = s
                    for j in range(i + 1):
                        s = 0.0
                        for c in range(n):
                            s += w[c] * zz[c, i] * zz[c, j]
                        a[i, j] = s
                        a[j, i] = s
                info = 1
                ridge = 0.0
                for attempt in range(4):
                    if attempt > 0:
                        # escalate a relative diagonal ridge and retry
                        s = 0.0
                        for i in range(d):
                            s += a[i, i]
                        ridge = (s / d) * (1e-12 if attempt == 1 else (1e-9 if attempt == 2 else 1e-6))
                        for i in range(d):
                            a[i, i] += ridge
                    info = _chol_solve(a, b, ecur, gl, <int>d)
                    if info == 0:
                        break
                if info != 0:
                    stat = 4
                    iters[g] = it + 1
                    break

                s2_new = 0.0
                for c in range(n):
                    fit = 0.0
                    for i in range(d):
                        fit += zz[c, i] * ecur[i]
                    r[c] = yg[g, c] - fit
                    s2_new += w[c] * r[c] * r[c]
                s2_new *= (gamma + 1.0)

                d_eta = 0.0
                n_eta = 0.0
                for i in range(d):
                    d_eta += (ecur[i] - eta[g, i]) * (ecur[i] - eta[g, i])
                    n_eta += eta[g, i] * eta[g, i]
                ch = sqrt(d_eta) / (1.0 + sqrt(n_eta))
                s = (s2_new - s2 if s2_new > s2 else s2 - s2_new) / (1.0 + s2)
                if s > ch:
                    ch = s

                for i in range(d):
                    eta[g, i] = ecur[i]
                s2 = s2_new if s2_new > 1e-300 else 1e-300
                iters[g] = it + 1
                if s2_new < floor:
                    stat = 2
                    # pin the collapsed variance at the relative floor so the
                    # recorded scale (and the weights derived from it) is
                    # reproducible rather than rounding noise
                    s2 = floor if floor > 1e-300 else 1e-300
                    break
                if ch < tol:
                    stat = 0
                    break
            else:
                stat = 1

        sigma2[g] = s2
        status[g] = stat

        # final weights from the returned iterate
        if stat == 3:
            for c in range(n):
                weights[g, c] = 1.0 / n
        else:
            for c in range(n):
                fit = 0.0
                for i in range(d):
                    fit += zz[c, i] * eta[g, i]
                r[c] = yg[g, c] - fit
            mx = -1e308
            for c in range(n):
                w[c] = -gamma * r[c] * r[c] / (2.0 * s2)
                if w[c] > mx:
                    mx = w[c]
            sw = 0.0
            for c in range(n):
                w[c] = exp(w[c] - mx)
                sw += w[c]
            for c in range(n):
                weights[g, c] = w[c] / sw

    return eta_np, sigma2_np, weights_np, iters_np, status_np
