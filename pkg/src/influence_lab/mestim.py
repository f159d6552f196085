"""Exact M-estimation by damped Newton.

``fit``, ``fit_weighted`` and ``fit_perturbed`` all minimize a weighted sum
of per-point losses; they differ only in the weights (and, for the
perturbed fit, one appended point).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import AllZeroWeights, Diverged, MaxIterations, NotPositiveDefinite
from .glm import DataPoint, Dataset, LossModel

DEFAULT_TOL = 1e-10
MAX_NEWTON = 200
MAX_HALVINGS = 60
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class FitResult:
    theta: np.ndarray
    grad_norm: float
    newton_iters: int
    objective: float
    objective_trace: tuple[float, ...] = ()


def _objective(model, X, y, w, theta) -> float:
    return float(w @ model.losses(X, y, theta))


def _gradient(model, X, y, w, theta) -> np.ndarray:
    if model.scalar_link:
        g = X.T @ (w * model.link_derivative(X, y, theta))
        return g + model.ridge * float(np.sum(w)) * theta
    return w @ model.grads(X, y, theta)


def _newton(model: LossModel, X, y, w, theta0, tol, max_iter=MAX_NEWTON) -> FitResult:
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not np.sum(w) > 0:
        raise AllZeroWeights("weights sum to zero")
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = model.param_dim(X.shape[1])
    theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=np.float64)
    if theta.shape != (d,):
        raise ValueError(f"theta0 has shape {theta.shape}, expected ({d},)")

    F = _objective(model, X, y, w, theta)
    g = _gradient(model, X, y, w, theta)
    gnorm = linalg.norm(g)
    trace = [F]
    for it in range(max_iter + 1):
        if gnorm <= tol:
            return FitResult(theta, gnorm, it, F, tuple(trace))
        if it == max_iter:
            break
        H = model.weighted_hessian(X, y, theta, w)
        try:
            step = -linalg.cholesky_solve(H, g)
        except NotPositiveDefinite:
            step = -linalg.cholesky_solve(H + 1e-10 * np.eye(d), g)
        slope = float(g @ step)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + t * step
            F_new = _objective(model, X, y, w, cand)
            if np.isfinite(F_new) and F_new <= F + ARMIJO_C * t * slope:
                g_new = _gradient(model, X, y, w, cand)
                break
            # Near the optimum the objective change drops below rounding; accept a step
            # that leaves F unchanged to the last few ulps while shrinking the gradient.
            if np.isfinite(F_new) and F_new - F <= 8 * np.finfo(float).eps * abs(F):
                g_new = _gradient(model, X, y, w, cand)
                if linalg.norm(g_new) < 0.5 * gnorm:
                    break
            t *= 0.5
        else:
            raise Diverged(f"line search failed after {MAX_HALVINGS} halvings at iteration {it}")
        theta, F, g = cand, F_new, g_new
        gnorm = linalg.norm(g)
        trace.append(F)
    raise MaxIterations(f"gradient norm {gnorm:.3e} > {tol:.1e} after {max_iter} Newton steps")


def fit(model: LossModel, data: Dataset, theta0=None, tol: float = DEFAULT_TOL, max_iter: int = MAX_NEWTON) -> FitResult:
    """theta_n = argmin (1/n) sum_i loss(Z_i, theta)."""
    return _newton(model, data.X, data.y, np.full(data.n, 1.0 / data.n), theta0, tol, max_iter)


def fit_weighted(model: LossModel, data: Dataset, w, theta0=None, tol: float = DEFAULT_TOL, max_iter: int = MAX_NEWTON) -> FitResult:
    """argmin sum_i w_i loss(Z_i, theta) for nonnegative weights."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (data.n,):
        raise ValueError(f"expected {data.n} weights, got {w.shape}")
    return _newton(model, data.X, data.y, w, theta0, tol, max_iter)


def fit_perturbed(
    model: LossModel,
    data: Dataset,
    z: DataPoint,
    eps: float,
    theta0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_NEWTON,
) -> FitResult:
    """argmin (1-eps)/n sum_i loss(Z_i, theta) + eps loss(z, theta).

    Pass the unperturbed ``theta_n`` as ``theta0`` to warm-start.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    X = np.vstack([data.X, np.asarray(z.x, dtype=np.float64)[None, :]])
    y = np.append(data.y, float(z.y))
    w = np.append(np.full(data.n, (1.0 - eps) / data.n), eps)
    return _newton(model, X, y, w, theta0, tol, max_iter)


def batch_hessian(model: LossModel, data: Dataset, theta) -> np.ndarray:
    """H_n(theta) = (1/n) sum_i Hessian_i(theta), ridge included."""
    return model.weighted_hessian(data.X, data.y, np.asarray(theta, dtype=np.float64), np.full(data.n, 1.0 / data.n))


def objective(model: LossModel, data: Dataset, theta) -> float:
    return float(np.mean(model.losses(data.X, data.y, np.asarray(theta, dtype=np.float64))))


__all__ = ["Dataset", "FitResult", "batch_hessian", "fit", "fit_perturbed", "fit_weighted", "objective"]
