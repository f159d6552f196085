# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Signatures mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite

cnp.import_array()


def cholesky_factor(double[:, ::1] A):
    """Lower factor L with A = L L^T.  Returns (L, k); k = -1 on success, else failing pivot."""
    cdef Py_ssize_t p = A.shape[0], i, j, k
    cdef double s
    L_arr = np.zeros((p, p), dtype=np.float64)
    cdef double[:, ::1] L = L_arr
    for j in range(p):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0):
            return L_arr, j
        L[j, j] = sqrt(s)
        for i in range(j + 1, p):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    return L_arr, -1


def cholesky_solve_factored(double[:, ::1] L, double[::1] b):
    cdef Py_ssize_t p = L.shape[0], i, k
    cdef double s
    x_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] x = x_arr
    for i in range(p):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(p - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, p):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x_arr


def jacobi_eigen(double[:, ::1] A_in, double tol_rel, int max_sweeps):
    """Cyclic Jacobi.  Returns (eigenvalues, eigenvectors as columns, sweeps, converged)."""
    cdef Py_ssize_t p = A_in.shape[0], i, j, k
    cdef double fro = 0.0, off, theta, t, c, s, aik, ajk, vik, vjk, aij, tol
    cdef int sweep
    A_arr = np.array(A_in, dtype=np.float64, copy=True)
    V_arr = np.eye(p, dtype=np.float64)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] V = V_arr
    for i in range(p):
        for j in range(p):
            fro += A[i, j] * A[i, j]
    tol = tol_rel * sqrt(fro)
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(p):
            for j in range(i + 1, p):
                off += 2.0 * A[i, j] * A[i, j]
        if sqrt(off) <= tol:
            return np.diagonal(A_arr).copy(), V_arr, sweep, True
        if sweep == max_sweeps:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = A[i, j]
                if aij == 0.0:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * aij)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(p):
                    aik = A[i, k]
                    ajk = A[j, k]
                    A[i, k] = c * aik - s * ajk
                    A[j, k] = s * aik + c * ajk
                for k in range(p):
                    aik = A[k, i]
                    ajk = A[k, j]
                    A[k, i] = c * aik - s * ajk
                    A[k, j] = s * aik + c * ajk
                A[i, j] = 0.0
                A[j, i] = 0.0
                for k in range(p):
                    vik = V[k, i]
                    vjk = V[k, j]
                    V[k, i] = c * vik - s * vjk
                    V[k, j] = s * vik + c * vjk
    return np.diagonal(A_arr).copy(), V_arr, max_sweeps, False


cdef inline void _rank1_hvp(double[:, ::1] X, double[::1] c, double shift,
                            Py_ssize_t i, double[::1] u, double[::1] out) noexcept nogil:
    cdef Py_ssize_t j, p = X.shape[1]
    cdef double s = 0.0
    for j in range(p):
        s += X[i, j] * u[j]
    s *= c[i]
    for j in range(p):
        out[j] = s * X[i, j] + shift * u[j]


cdef inline void _dense_hvp(double[:, :, ::1] Hs, double shift,
                            Py_ssize_t i, double[::1] u, double[::1] out) noexcept nogil:
    cdef Py_ssize_t j, k, p = Hs.shape[1]
    cdef double s
    for j in range(p):
        s = 0.0
        for k in range(p):
            s += Hs[i, j, k] * u[k]
        out[j] = s + shift * u[j]


cdef object _sgd(double[:, ::1] X, double[::1] c, double[:, :, ::1] Hs, bint dense,
                 double shift, double[::1] v, double[::1] u0, double gamma,
                 Py_ssize_t[::1] idx, Py_ssize_t tail_start, int form, bint trace):
    cdef Py_ssize_t p = u0.shape[0], T = idx.shape[0], t, j, i
    cdef Py_ssize_t n_tail = 0
    cdef bint ok = True
    u_arr = np.array(u0, dtype=np.float64, copy=True)
    h_arr = np.empty(p, dtype=np.float64)
    acc_arr = np.zeros(p, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] h = h_arr
    cdef double[::1] acc = acc_arr
    cdef double[:, ::1] tr
    tr_arr = None
    if trace:
        tr_arr = np.empty((T + 1, p), dtype=np.float64)
        tr = tr_arr
        for j in range(p):
            tr[0, j] = u[j]
    for t in range(T):
        i = idx[t]
        if dense:
            _dense_hvp(Hs, shift, i, u, h)
        else:
            _rank1_hvp(X, c, shift, i, u, h)
        if form == 0:
            for j in range(p):
                u[j] = u[j] - gamma * (h[j] + v[j])
        else:
            for j in range(p):
                u[j] = (-gamma * v[j] + u[j]) - gamma * h[j]
        if t + 1 >= tail_start:
            n_tail += 1
            for j in range(p):
                acc[j] += u[j]
        if trace:
            for j in range(p):
                tr[t + 1, j] = u[j]
        if (t & 255) == 255 or t == T - 1:
            for j in range(p):
                if not isfinite(u[j]):
                    ok = False
            if not ok:
                return u_arr, acc_arr, n_tail, tr_arr, t + 1
    return u_arr, acc_arr, n_tail, tr_arr, -1


_EMPTY3 = np.zeros((1, 1, 1), dtype=np.float64)
_EMPTY2 = np.zeros((1, 1), dtype=np.float64)
_EMPTY1 = np.zeros(1, dtype=np.float64)


def sgd_rank1(X, c, double shift, v, u0, double gamma, idx, Py_ssize_t tail_start, int form, bint trace):
    """Per-step u <- u - gamma (H_i u + v) with H_i = c_i x_i x_i^T + shift I.

    Returns (u_last, tail_sum, tail_count, trace_or_None, bad_step); bad_step = -1 unless
    a non-finite iterate appeared.  ``form`` 1 evaluates the LiSSA ordering (-gamma v + u) - gamma H_i u.
    """
    return _sgd(X, c, _EMPTY3, False, shift, v, u0, gamma, idx, tail_start, form, trace)


def sgd_dense(Hs, double shift, v, u0, double gamma, idx, Py_ssize_t tail_start, int form, bint trace):
    return _sgd(_EMPTY2, _EMPTY1, Hs, True, shift, v, u0, gamma, idx, tail_start, form, trace)


cdef object _svrg_epoch(double[:, ::1] X, double[::1] c, double[:, :, ::1] Hs, bint dense,
                        double shift, double[::1] u0, double[::1] anchor_grad,
                        double gamma, Py_ssize_t[::1] idx):
    cdef Py_ssize_t p = u0.shape[0], T = idx.shape[0], t, j, i
    u_arr = np.array(u0, dtype=np.float64, copy=True)
    d_arr = np.empty(p, dtype=np.float64)
    h_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] d = d_arr
    cdef double[::1] h = h_arr
    for t in range(T):
        i = idx[t]
        for j in range(p):
            d[j] = u[j] - u0[j]
        if dense:
            _dense_hvp(Hs, shift, i, d, h)
        else:
            _rank1_hvp(X, c, shift, i, d, h)
        for j in range(p):
            u[j] = u[j] - gamma * (h[j] + anchor_grad[j])
        if (t & 255) == 255 or t == T - 1:
            for j in range(p):
                if not isfinite(u[j]):
                    return u_arr, t + 1
    return u_arr, -1


def svrg_epoch_rank1(X, c, double shift, u0, anchor_grad, double gamma, idx):
    """One SVRG epoch: u <- u - gamma (H_i u - H_i u0 + anchor_grad).  Returns (u, bad_step)."""
    return _svrg_epoch(X, c, _EMPTY3, False, shift, u0, anchor_grad, gamma, idx)


def svrg_epoch_dense(Hs, double shift, u0, anchor_grad, double gamma, idx):
    return _svrg_epoch(_EMPTY2, _EMPTY1, Hs, True, shift, u0, anchor_grad, gamma, idx)
