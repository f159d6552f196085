"""Influence functions, effective dimension, condition numbers and error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import ihvp, linalg, mestim
from .errors import EmptyDataset, NotPositiveDefinite
from .glm import DataPoint, Dataset, LossModel
from .ihvp import HvpOracle, IhvpSolution, SolverConfig

EXACT = SolverConfig(method="exact")


@dataclass(frozen=True)
class InfluenceReport:
    z: DataPoint
    influence: np.ndarray
    solution: IhvpSolution
    damping: float = 0.0


@dataclass(frozen=True)
class PopulationProxy:
    """Stand-in for population quantities, computed from a large sample of size N."""

    model: LossModel
    data: Dataset
    fit: mestim.FitResult
    hessian: np.ndarray
    grad_cov: np.ndarray

    @property
    def N(self) -> int:
        return self.data.n

    @classmethod
    def build(cls, model: LossModel, data: Dataset, tol: float = mestim.DEFAULT_TOL) -> PopulationProxy:
        res = mestim.fit(model, data, tol=tol)
        H = mestim.batch_hessian(model, data, res.theta)
        G = gradient_covariance(model, data, res.theta)
        return cls(model, data, res, H, G)


@dataclass(frozen=True)
class BoundParams:
    R: float
    mu: float  # lambda_min of the population Hessian
    p_eff: float  # effective dimension
    p: int
    delta: float = 0.05
    C: float = 1.0
    extra: dict = field(default_factory=dict)  # K1, K2, sigma_H, M1, ...: recorded, not used

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.mu > 0:
            raise ValueError("mu must be positive")


class BoundValue(NamedTuple):
    value: float
    n_threshold: float  # sample size above which the bound applies
    degenerate: bool  # True when R == 0 makes the printed bound vanish


def influence_empirical(model: LossModel, data: Dataset, fit: mestim.FitResult, z: DataPoint,
                        solver_cfg: SolverConfig = EXACT) -> InfluenceReport:
    """-(H_n(theta_n) + lambda I)^{-1} grad loss(z, theta_n) with the configured solver."""
    oracle = HvpOracle.from_glm(model, data, fit.theta)
    v = model.grad(z, fit.theta)
    sol = ihvp.solve(oracle, v, solver_cfg)
    return InfluenceReport(z, sol.u, sol, solver_cfg.damping)


def influence_population(proxy: PopulationProxy, z: DataPoint, solver_cfg: SolverConfig = EXACT) -> InfluenceReport:
    if solver_cfg.method == "exact":
        v = proxy.model.grad(z, proxy.fit.theta)
        sol = ihvp.solve_exact(proxy.hessian, v, solver_cfg.damping, proxy.N)
        return InfluenceReport(z, sol.u, sol, solver_cfg.damping)
    return influence_empirical(proxy.model, proxy.data, proxy.fit, z, solver_cfg)


def prediction_influence(model: LossModel, data: Dataset, fit: mestim.FitResult, z: DataPoint, z_test: DataPoint,
                         solver_cfg: SolverConfig = EXACT) -> float:
    """<grad h(theta_n), I_{n,lambda}(z)> for h = loss(z_test, .)."""
    grad_h = model.grad(z_test, fit.theta)
    if not np.any(grad_h):
        return 0.0
    rep = influence_empirical(model, data, fit, z, solver_cfg)
    return float(grad_h @ rep.influence)


def gradient_covariance(model: LossModel, data: Dataset, theta) -> np.ndarray:
    """(1/n) sum g_i g_i^T - g_bar g_bar^T over per-point gradients."""
    if data.n < 1:
        raise EmptyDataset("gradient covariance of an empty dataset")
    G = model.grads(data.X, data.y, np.asarray(theta, dtype=np.float64))
    gbar = G.mean(axis=0)
    C = G.T @ G / data.n - np.outer(gbar, gbar)
    return linalg.symmetrize(0.5 * (C + C.T))


def effective_dimension(H, G) -> float:
    """Tr(H^{-1/2} G H^{-1/2}) = Tr(H^{-1} G), by one Cholesky factorization and d solves."""
    L = linalg.cholesky(H)
    X = linalg.solve_factored(L, linalg.symmetrize(G))
    return float(np.trace(X))


def condition_numbers(model: LossModel, data: Dataset, fit: mestim.FitResult, L: float | None = None) -> tuple[float, float, float]:
    """(kappa_n, mu_n, log K_n) with kappa_n = L / lambda_min(H_n) and
    log K_n = d log(Tr H_n / d) - sum log lambda_i."""
    H = mestim.batch_hessian(model, data, fit.theta)
    return condition_numbers_of(H, model.smoothness_L(data) if L is None else L)


def condition_numbers_of(H, L: float) -> tuple[float, float, float]:
    lam = linalg.sym_eigen(H).eigenvalues
    if lam[-1] <= 0:
        raise NotPositiveDefinite(f"lambda_min = {lam[-1]:.3e}")
    d = lam.size
    log_k = d * math.log(float(np.sum(lam)) / d) - float(np.sum(np.log(lam)))
    return L / float(lam[-1]), float(lam[-1]), log_k


def theorem1_bound(bp: BoundParams, n: int) -> BoundValue:
    """C R^2 p_eff^2 log^3(p/delta) / (mu n), with the sample-size threshold
    C (R^2 p_eff / mu log(1/delta) + log(p/delta))."""
    if n < 1:
        raise ValueError("n must be at least 1")
    log_pd = math.log(bp.p / bp.delta)
    value = bp.C * bp.R**2 * bp.p_eff**2 * log_pd**3 / (bp.mu * n)
    thresh = bp.C * (bp.R**2 * bp.p_eff / bp.mu * math.log(1 / bp.delta) + log_pd)
    return BoundValue(value, thresh, bp.R == 0)


def total_error_bound(eps_comp: float, bp: BoundParams, n: int) -> float:
    """8 eps + statistical bound."""
    if eps_comp < 0:
        raise ValueError("eps_comp must be nonnegative")
    return 8.0 * eps_comp + theorem1_bound(bp, n).value


def hstar_norm_error(I_a, I_b, H_ref) -> float:
    """||I_a - I_b||^2 in the H_ref geometry."""
    I_a = np.asarray(I_a, dtype=np.float64)
    I_b = np.asarray(I_b, dtype=np.float64)
    if I_a.shape != I_b.shape:
        raise ValueError(f"dimension mismatch {I_a.shape} vs {I_b.shape}")
    return linalg.weighted_norm(I_a - I_b, H_ref) ** 2


def bound_params_from_proxy(proxy: PopulationProxy, delta: float = 0.05, C: float = 1.0) -> BoundParams:
    """Plug-in BoundParams: R = max per-point self-concordance over the proxy sample."""
    norms = np.sqrt(np.einsum("ij,ij->i", proxy.data.X, proxy.data.X))
    R = proxy.model.self_concordance_R(DataPoint(proxy.data.X[int(np.argmax(norms))], proxy.data.y[0]))
    mu = float(linalg.sym_eigen(proxy.hessian).eigenvalues[-1])
    p_eff = effective_dimension(proxy.hessian, proxy.grad_cov)
    return BoundParams(R=R, mu=mu, p_eff=p_eff, p=proxy.hessian.shape[0], delta=delta, C=C)
