# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: forward filter pass and quadrature log-likelihood.

Semantics match _kernels_py exactly (same solver, same tolerances, same
error reporting); see that module for the documented contracts.  Both
entry points release the GIL around the numeric loops so independent
chains can run concurrently in threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, log, sqrt

cnp.import_array()

BACKEND = "compiled"

cdef double SCORE_TOL = 1e-10
cdef int MAX_NEWTON = 50
cdef double SQRT_PI = 1.7724538509055159


cdef inline double _sig(double t) noexcept nogil:
    cdef double e
    if t >= 0.0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


def filter_pass(object usum_in, object beta_in, double state_var):
    cdef double[:, ::1] usum = np.ascontiguousarray(usum_in, dtype=np.float64)
    cdef double[::1] beta = np.ascontiguousarray(beta_in, dtype=np.float64)
    cdef Py_ssize_t I = usum.shape[0], N = usum.shape[1], J = beta.shape[0]
    pred_mean = np.zeros((I, N))
    pred_var = np.ones((I, N))
    filt_mean = np.zeros((I, N))
    filt_var = np.ones((I, N))
    cdef double[:, ::1] pm = pred_mean, pv = pred_var, fm = filt_mean, fv = filt_var
    cdef Py_ssize_t i, n, j, it, err_i = -1, err_n = -1
    cdef double m, v, z, s, c, lo, hi, un, sg, newton, znew, dxold
    cdef bint ok
    with nogil:
        for i in range(I):
            for n in range(1, N):
                m = fm[i, n - 1]
                v = fv[i, n - 1] + state_var
                pm[i, n] = m
                pv[i, n] = v
                un = usum[i, n]
                z = m
                lo = m + v * (un - J) - 1.0
                hi = m + v * un + 1.0
                dxold = hi - lo
                c = -1.0 / v
                ok = False
                for it in range(MAX_NEWTON):
                    s = (m - z) / v + un
                    c = -1.0 / v
                    for j in range(J):
                        sg = _sig(beta[j] + z)
                        s -= sg
                        c -= sg * (1.0 - sg)
                    if fabs(s) < SCORE_TOL:
                        ok = True
                        break
                    if s > 0.0:
                        lo = z
                    else:
                        hi = z
                    # Newton only while inside the bracket and still halving
                    # the step size; otherwise bisect
                    newton = z - s / c
                    if newton <= lo or newton >= hi or fabs(2.0 * s) > fabs(dxold * c):
                        znew = 0.5 * (lo + hi)
                    else:
                        znew = newton
                    dxold = fabs(znew - z)
                    z = znew
                if not ok:
                    err_i = i
                    err_n = n
                    break
                fm[i, n] = z
                fv[i, n] = -1.0 / c
            if err_i >= 0:
                break
    return pred_mean, pred_var, filt_mean, filt_var, err_i, err_n


def loglik_terms(object F1_in, object F2_in, object beta_in,
                 object pred_mean_in, object pred_var_in,
                 object gh_x_in, object gh_w_in):
    cdef double[:, :, ::1] F1 = np.ascontiguousarray(F1_in, dtype=np.float64)
    cdef double[:, :, ::1] F2 = np.ascontiguousarray(F2_in, dtype=np.float64)
    cdef double[::1] beta = np.ascontiguousarray(beta_in, dtype=np.float64)
    cdef double[:, ::1] pm = np.ascontiguousarray(pred_mean_in, dtype=np.float64)
    cdef double[:, ::1] pv = np.ascontiguousarray(pred_var_in, dtype=np.float64)
    cdef double[::1] ghx = np.ascontiguousarray(gh_x_in, dtype=np.float64)
    cdef double[::1] ghw = np.ascontiguousarray(gh_w_in, dtype=np.float64)
    cdef Py_ssize_t I = F1.shape[0], J = F1.shape[1], N = F1.shape[2]
    cdef Py_ssize_t M = ghx.shape[0]
    node_arr = np.empty(M)
    wbar_arr = np.empty(M)
    cdef double[::1] node = node_arr, wbar = wbar_arr
    cdef Py_ssize_t i, j, n, k, err_i = -1, err_j = -1, err_n = -1
    cdef double total = 0.0, subtotal, mean, spread, S, dens
    for k in range(M):
        wbar[k] = ghw[k] / SQRT_PI
    with nogil:
        for i in range(I):
            subtotal = 0.0
            for n in range(N):
                mean = pm[i, n]
                spread = sqrt(2.0 * pv[i, n])
                for k in range(M):
                    node[k] = mean + spread * ghx[k]
                for j in range(J):
                    S = 0.0
                    for k in range(M):
                        S += wbar[k] * _sig(beta[j] + node[k])
                    dens = F2[i, j, n] + (F1[i, j, n] - F2[i, j, n]) * S
                    if dens <= 0.0 or not isfinite(dens):
                        err_i = i
                        err_j = j
                        err_n = n
                        break
                    subtotal += log(dens)
                if err_i >= 0:
                    break
            if err_i >= 0:
                break
            total += subtotal
    if err_i >= 0:
        return np.nan, err_i, err_j, err_n
    return total, -1, -1, -1
