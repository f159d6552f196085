"""Small dense linear algebra: SPD solves, symmetric eigendecomposition, weighted norms.

Vectors and matrices are plain float64 numpy arrays.  Symmetric inputs are
mirrored from their upper triangle before use, so every routine sees an
exactly symmetric matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NegativeQuadraticForm, NoConvergence, NotPositiveDefinite

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100


def symmetrize(A) -> np.ndarray:
    """Copy of ``A`` with the lower triangle overwritten by the upper one."""
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    iu = np.triu_indices(A.shape[0], 1)
    A[(iu[1], iu[0])] = A[iu]
    return np.ascontiguousarray(A)


@dataclass(frozen=True)
class EigenDecomp:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # orthonormal columns
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T


def cholesky(A) -> np.ndarray:
    """Lower-triangular L with A = L L^T.  No pivoting."""
    A = symmetrize(A)
    L, bad = kernels.cholesky_factor(A)
    if bad >= 0:
        raise NotPositiveDefinite(f"nonpositive pivot at index {bad}")
    return L


def cholesky_solve(A, b) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A."""
    L = cholesky(A)
    return solve_factored(L, b)


def solve_factored(L: np.ndarray, b) -> np.ndarray:
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.ndim == 1:
        return kernels.cholesky_solve_factored(L, b)
    return np.column_stack([kernels.cholesky_solve_factored(L, np.ascontiguousarray(col)) for col in b.T])


def sym_eigen(A) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Converged when the off-diagonal Frobenius mass is at most
    ``1e-14 * ||A||_F``; raises :class:`NoConvergence` after 100 sweeps.
    """
    A = symmetrize(A)
    w, V, sweeps, ok = kernels.jacobi_eigen(A, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if not ok:
        raise NoConvergence(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    order = np.argsort(-w, kind="stable")
    return EigenDecomp(np.asarray(w)[order], np.ascontiguousarray(np.asarray(V)[:, order]), sweeps)


def weighted_norm(u, A) -> float:
    """sqrt(u^T A u) for positive semidefinite A."""
    u = np.asarray(u, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (u.size, u.size):
        raise ValueError(f"dimension mismatch: u has {u.size} entries, A is {A.shape}")
    q = float(u @ (A @ u))
    if q < -1e-12:
        raise NegativeQuadraticForm(f"u^T A u = {q:.3e} < 0")
    return float(np.sqrt(max(q, 0.0)))


def norm(u) -> float:
    u = np.asarray(u, dtype=np.float64)
    return float(np.sqrt(u @ u))


def spd_inverse_sqrt(A) -> tuple[np.ndarray, np.ndarray]:
    """(A^{1/2}, A^{-1/2}) via the eigendecomposition; A must be SPD."""
    eig = sym_eigen(A)
    lam = eig.eigenvalues
    if lam[-1] <= 0.0:
        raise NotPositiveDefinite(f"smallest eigenvalue {lam[-1]:.3e} is not positive")
    Q = eig.eigenvectors
    return (Q * np.sqrt(lam)) @ Q.T, (Q / np.sqrt(lam)) @ Q.T
