# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot inner kernels.

Semantics must stay in lockstep with eegentropy._kernels_py; the parity
test suite compares both backends on the same inputs.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

cimport numpy as cnp
from libc.math cimport acos, exp, fabs, pow

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double _PI = 3.141592653589793


def sampen_counts(x, int m, double tol):
    """Count template matches for sample entropy; see the numpy twin."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t nt = xv.shape[0] - m
    cdef Py_ssize_t i, j, k
    cdef double dm, diff
    cdef long long a = 0, b = 0
    with nogil:
        for i in range(nt - 1):
            for j in range(i + 1, nt):
                dm = 0.0
                for k in range(m):
                    diff = fabs(xv[i + k] - xv[j + k])
                    if diff > dm:
                        dm = diff
                        if dm > tol:
                            break
                if dm <= tol:
                    # Chebyshev distance only grows with the extra sample,
                    # so the length-(m+1) check reuses dm.
                    b += 1
                    diff = fabs(xv[i + m] - xv[j + m])
                    if diff > dm:
                        dm = diff
                    if dm <= tol:
                        a += 1
    return int(a), int(b)


cdef double _mean_membership(double[:, ::1] v, double tol, double r2) nogil:
    cdef Py_ssize_t nt = v.shape[0]
    cdef Py_ssize_t width = v.shape[1]
    cdef Py_ssize_t i, j, k
    cdef int ir2 = <int> r2
    cdef bint int_pow = (<double> ir2) == r2 and 1 <= ir2 <= 8
    cdef double d, diff, dp, total = 0.0
    cdef int q
    for i in range(nt - 1):
        for j in range(i + 1, nt):
            d = 0.0
            for k in range(width):
                diff = fabs(v[i, k] - v[j, k])
                if diff > d:
                    d = diff
            if int_pow:
                dp = d
                for q in range(ir2 - 1):
                    dp *= d
            else:
                dp = pow(d, r2)
            total += exp(-dp / tol)
    return 2.0 * total / (nt * (nt - 1.0))


def fuzzen_phis(x, int m, double tol, double r2):
    """Mean fuzzy memberships (phi_m, phi_m1); see the numpy twin."""
    xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t nt = xa.shape[0] - m
    wm1 = sliding_window_view(xa, m + 1)
    cm1 = np.ascontiguousarray(wm1 - wm1.mean(axis=1, keepdims=True))
    cdef double[:, ::1] cm1v = cm1
    cdef double phi_m, phi_m1
    if m == 1:
        phi_m = 1.0
    else:
        wm = sliding_window_view(xa, m)[:nt]
        cm = np.ascontiguousarray(wm - wm.mean(axis=1, keepdims=True))
        phi_m = _mean_membership(cm, tol, r2)
    phi_m1 = _mean_membership(cm1v, tol, r2)
    return float(phi_m), float(phi_m1)


def cosien_count(v, norms, double r):
    """Count embedding pairs with angular distance < r; see the numpy twin."""
    cdef double[:, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[::1] nv = np.ascontiguousarray(norms, dtype=np.float64)
    cdef Py_ssize_t n = vv.shape[0]
    cdef Py_ssize_t m = vv.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double dot, cosv, ang
    cdef long long count = 0
    with nogil:
        for i in range(n - 1):
            for j in range(i + 1, n):
                dot = 0.0
                for k in range(m):
                    dot += vv[i, k] * vv[j, k]
                cosv = dot / (nv[i] * nv[j])
                if cosv > 1.0:
                    cosv = 1.0
                elif cosv < -1.0:
                    cosv = -1.0
                ang = acos(cosv) / _PI
                if ang < r:
                    count += 1
    return int(count)


def smo_solve(kmat, y, double c, double tol, long max_iter):
    """Sequential minimal optimization for the soft-margin dual.

    Mirrors the numpy twin: maximal-violating-pair selection with a
    next-best fallback when a step is blocked, returning
    (alpha, bias, gap, iterations, converged).
    """
    cdef double[:, ::1] km = np.ascontiguousarray(kmat, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    alpha_arr = np.zeros(n, dtype=np.float64)
    u_arr = np.zeros(n, dtype=np.float64)
    tried_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] u = u_arr
    cdef unsigned char[::1] tried = tried_arr
    cdef Py_ssize_t it = 0, i, j, k, best
    cdef double g_i, g_j, gap, bias, gk, best_g
    cdef bint converged, stepped, any_up, any_low, found
    cdef Py_ssize_t n_free
    cdef double free_sum

    while True:
        # Most violating pair: i maximizes y-u over the "up" set,
        # j minimizes it over the "low" set.
        i = -1
        j = -1
        any_up = False
        any_low = False
        g_i = 0.0
        g_j = 0.0
        for k in range(n):
            gk = yv[k] - u[k]
            if (yv[k] > 0.0 and alpha[k] < c) or (yv[k] < 0.0 and alpha[k] > 0.0):
                if not any_up or gk > g_i:
                    g_i = gk
                    i = k
                    any_up = True
            if (yv[k] > 0.0 and alpha[k] > 0.0) or (yv[k] < 0.0 and alpha[k] < c):
                if not any_low or gk < g_j:
                    g_j = gk
                    j = k
                    any_low = True
        if any_up and any_low:
            gap = g_i - g_j
            converged = gap <= tol
        else:
            gap = 0.0
            converged = True

        stepped = False
        if not converged and it < max_iter:
            stepped = _step(km, yv, alpha, u, i, j, c)
            if not stepped:
                # Blocked pair: next-best j candidates in ascending
                # (g, index) order while the pair still violates.
                for k in range(n):
                    tried[k] = 0
                tried[j] = 1
                while True:
                    found = False
                    best = -1
                    best_g = 0.0
                    for k in range(n):
                        if tried[k]:
                            continue
                        if not ((yv[k] > 0.0 and alpha[k] > 0.0) or
                                (yv[k] < 0.0 and alpha[k] < c)):
                            continue
                        gk = yv[k] - u[k]
                        if not found or gk < best_g:
                            best_g = gk
                            best = k
                            found = True
                    if not found or best_g >= g_i:
                        break
                    tried[best] = 1
                    if _step(km, yv, alpha, u, i, best, c):
                        stepped = True
                        break
            if not stepped:
                # Then next-best i candidates in descending (g, index)
                # order against the original j.
                for k in range(n):
                    tried[k] = 0
                tried[i] = 1
                while True:
                    found = False
                    best = -1
                    best_g = 0.0
                    for k in range(n):
                        if tried[k]:
                            continue
                        if not ((yv[k] > 0.0 and alpha[k] < c) or
                                (yv[k] < 0.0 and alpha[k] > 0.0)):
                            continue
                        gk = yv[k] - u[k]
                        if not found or gk > best_g:
                            best_g = gk
                            best = k
                            found = True
                    if not found or best_g <= g_j:
                        break
                    tried[best] = 1
                    if _step(km, yv, alpha, u, best, j, c):
                        stepped = True
                        break

        if not stepped:
            n_free = 0
            free_sum = 0.0
            for k in range(n):
                if alpha[k] > 1e-12 and alpha[k] < c - 1e-12:
                    free_sum += yv[k] - u[k]
                    n_free += 1
            if n_free > 0:
                bias = free_sum / n_free
            elif any_up and any_low:
                bias = (g_i + g_j) / 2.0
            else:
                bias = 0.0
            if gap < 0.0:
                gap = 0.0
            return alpha_arr, float(bias), float(gap), int(it), bool(converged)
        it += 1


cdef bint _step(double[:, ::1] km, double[::1] yv, double[::1] alpha,
                double[::1] u, Py_ssize_t i, Py_ssize_t j, double c) nogil:
    cdef double ai_old, aj_old, lo, hi, eta, gi, gj, aj, ai, slope, da_i, da_j
    cdef Py_ssize_t k, n = yv.shape[0]
    if i == j:
        return False
    ai_old = alpha[i]
    aj_old = alpha[j]
    if yv[i] != yv[j]:
        lo = max(0.0, aj_old - ai_old)
        hi = min(c, c + aj_old - ai_old)
    else:
        lo = max(0.0, ai_old + aj_old - c)
        hi = min(c, ai_old + aj_old)
    if lo >= hi:
        return False
    eta = km[i, i] + km[j, j] - 2.0 * km[i, j]
    gi = yv[i] - u[i]
    gj = yv[j] - u[j]
    if eta > 1e-15:
        aj = aj_old + yv[j] * (gj - gi) / eta
        if aj < lo:
            aj = lo
        elif aj > hi:
            aj = hi
    else:
        # dual objective is linear along the constraint line with slope
        # y_j (g_i - g_j); walk to the bound that decreases it
        slope = yv[j] * (gi - gj)
        aj = lo if slope > 0.0 else hi
    if fabs(aj - aj_old) < 1e-12:
        return False
    ai = ai_old + yv[i] * yv[j] * (aj_old - aj)
    # snap float dust onto the box so bound membership stays exact
    if aj < 1e-12:
        aj = 0.0
    elif aj > c - 1e-12:
        aj = c
    if ai < 1e-12:
        ai = 0.0
    elif ai > c - 1e-12:
        ai = c
    alpha[i] = ai
    alpha[j] = aj
    da_i = yv[i] * (ai - ai_old)
    da_j = yv[j] * (aj - aj_old)
    for k in range(n):
        u[k] += da_i * km[i, k] + da_j * km[j, k]
    return True
