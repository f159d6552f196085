"""Pure-Python/numpy fallback for ``_ckernels``.

Same signatures and return conventions; results agree with the compiled
kernels to rounding (summation order inside numpy dots may differ).
"""

from __future__ import annotations

import math

import numpy as np


def cholesky_factor(A):
    A = np.asarray(A, dtype=np.float64)
    p = A.shape[0]
    L = np.zeros((p, p))
    for j in range(p):
        s = A[j, j] - L[j, :j] @ L[j, :j]
        if not s > 0.0:
            return L, j
        L[j, j] = math.sqrt(s)
        if j + 1 < p:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L, -1


def cholesky_solve_factored(L, b):
    p = L.shape[0]
    x = np.array(b, dtype=np.float64)
    for i in range(p):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    for i in range(p - 1, -1, -1):
        x[i] = (x[i] - L[i + 1 :, i] @ x[i + 1 :]) / L[i, i]
    return x


def jacobi_eigen(A_in, tol_rel, max_sweeps):
    A = np.array(A_in, dtype=np.float64)
    p = A.shape[0]
    V = np.eye(p)
    tol = tol_rel * math.sqrt(float(np.sum(A * A)))
    iu = np.triu_indices(p, 1)
    for sweep in range(max_sweeps + 1):
        off = math.sqrt(2.0 * float(np.sum(A[iu] ** 2)))
        if off <= tol:
            return np.diagonal(A).copy(), V, sweep, True
        if sweep == max_sweeps:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = A[i, j]
                if aij == 0.0:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * aij)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ri = A[i, :].copy()
                rj = A[j, :].copy()
                A[i, :] = c * ri - s * rj
                A[j, :] = s * ri + c * rj
                ci = A[:, i].copy()
                cj = A[:, j].copy()
                A[:, i] = c * ci - s * cj
                A[:, j] = s * ci + c * cj
                A[i, j] = 0.0
                A[j, i] = 0.0
                vi = V[:, i].copy()
                vj = V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
    return np.diagonal(A).copy(), V, max_sweeps, False


@np.errstate(over="ignore", invalid="ignore")
def _sgd(hvp, shift, v, u0, gamma, idx, tail_start, form, trace):
    u = np.array(u0, dtype=np.float64)
    acc = np.zeros_like(u)
    n_tail = 0
    T = len(idx)
    tr = None
    if trace:
        tr = np.empty((T + 1, u.size))
        tr[0] = u
    for t in range(T):
        h = hvp(int(idx[t]), u) + shift * u
        if form == 0:
            u = u - gamma * (h + v)
        else:
            u = (-gamma * v + u) - gamma * h
        if t + 1 >= tail_start:
            n_tail += 1
            acc += u
        if trace:
            tr[t + 1] = u
        if ((t & 255) == 255 or t == T - 1) and not np.all(np.isfinite(u)):
            return u, acc, n_tail, tr, t + 1
    return u, acc, n_tail, tr, -1


def sgd_rank1(X, c, shift, v, u0, gamma, idx, tail_start, form, trace):
    return _sgd(lambda i, u: (c[i] * (X[i] @ u)) * X[i], shift, v, u0, gamma, idx, tail_start, form, trace)


def sgd_dense(Hs, shift, v, u0, gamma, idx, tail_start, form, trace):
    return _sgd(lambda i, u: Hs[i] @ u, shift, v, u0, gamma, idx, tail_start, form, trace)


@np.errstate(over="ignore", invalid="ignore")
def _svrg_epoch(hvp, shift, u0, anchor_grad, gamma, idx):
    u = np.array(u0, dtype=np.float64)
    T = len(idx)
    for t in range(T):
        d = u - u0
        u = u - gamma * (hvp(int(idx[t]), d) + shift * d + anchor_grad)
        if ((t & 255) == 255 or t == T - 1) and not np.all(np.isfinite(u)):
            return u, t + 1
    return u, -1


def svrg_epoch_rank1(X, c, shift, u0, anchor_grad, gamma, idx):
    return _svrg_epoch(lambda i, u: (c[i] * (X[i] @ u)) * X[i], shift, u0, anchor_grad, gamma, idx)


def svrg_epoch_dense(Hs, shift, u0, anchor_grad, gamma, idx):
    return _svrg_epoch(lambda i, u: Hs[i] @ u, shift, u0, anchor_grad, gamma, idx)
