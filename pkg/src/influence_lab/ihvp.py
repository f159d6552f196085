"""Inverse-Hessian-vector products u* = -(H + lambda I)^{-1} v.

Every solver minimizes the quadratic ``g(u) = u^T H u / 2 + <v, u>`` through a
Hessian-vector-product oracle and reports how many per-point HVPs it spent
(one batch HVP costs ``n``).

Methods: ``exact`` (dense Cholesky), ``cg``, ``sgd``, ``lissa``, ``svrg``,
``accel_svrg`` (Catalyst outer loop around SVRG) and ``arnoldi`` (rank-k
Krylov approximation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels, linalg, rng
from .errors import (
    BreakdownZeroCurvature,
    DivergedNonFinite,
    NonpositiveRitzValue,
    NotPositiveDefinite,
    UnsupportedDecay,
)

METHODS = ("exact", "cg", "sgd", "lissa", "svrg", "accel_svrg", "arnoldi")


class HvpOracle:
    """Per-point Hessians ``H_i + shift * I`` of a fixed dataset.

    Two storage forms: rank-one (``H_i = c_i x_i x_i^T``, the scalar-link GLM
    case) or a dense ``(n, d, d)`` stack.  ``calls`` tallies per-point HVPs.
    """

    def __init__(self, *, X=None, curv=None, stack=None, shift: float = 0.0):
        if (stack is None) == (X is None):
            raise ValueError("give either X and curv, or stack")
        if stack is not None:
            self.stack = np.ascontiguousarray(stack, dtype=np.float64)
            self.X = self.curv = None
            self.n, self.dim = self.stack.shape[0], self.stack.shape[1]
        else:
            self.X = np.ascontiguousarray(X, dtype=np.float64)
            self.curv = np.ascontiguousarray(curv, dtype=np.float64)
            self.stack = None
            self.n, self.dim = self.X.shape
        self.shift = float(shift)
        self.calls = 0
        self._L = None

    @classmethod
    def from_glm(cls, model, data, theta, damping: float = 0.0) -> HvpOracle:
        theta = np.asarray(theta, dtype=np.float64)
        if model.scalar_link:
            return cls(X=data.X, curv=model.curvatures(data.X, data.y, theta), shift=model.ridge + damping)
        return cls(stack=model.point_hessians(data.X, data.y, theta), shift=model.ridge + damping)

    @classmethod
    def from_matrix(cls, H, n: int = 1) -> HvpOracle:
        """Every per-point Hessian equals ``H`` (noise-free stochastic oracle)."""
        H = linalg.symmetrize(H)
        return cls(stack=np.broadcast_to(H, (n,) + H.shape).copy())

    @property
    def rank_one(self) -> bool:
        return self.stack is None

    def with_shift(self, extra: float) -> HvpOracle:
        other = HvpOracle.__new__(HvpOracle)
        other.__dict__.update(self.__dict__)
        other.shift = self.shift + float(extra)
        other.calls = 0
        other._L = None
        return other

    def charge(self, k: int) -> None:
        self.calls += int(k)

    def _point(self, i: int, u: np.ndarray) -> np.ndarray:
        if self.stack is not None:
            return self.stack[i] @ u + self.shift * u
        x = self.X[i]
        return (self.curv[i] * (x @ u)) * x + self.shift * u

    def _batch(self, u: np.ndarray) -> np.ndarray:
        if self.stack is not None:
            return np.einsum("ijk,k->j", self.stack, u) / self.n + self.shift * u
        return self.X.T @ (self.curv * (self.X @ u)) / self.n + self.shift * u

    def point_hvp(self, i: int, u) -> np.ndarray:
        self.calls += 1
        return self._point(int(i), np.asarray(u, dtype=np.float64))

    def batch_hvp(self, u) -> np.ndarray:
        self.calls += self.n
        return self._batch(np.asarray(u, dtype=np.float64))

    def dense(self) -> np.ndarray:
        """H_n + shift I, not charged."""
        if self.stack is not None:
            H = self.stack.mean(axis=0)
        else:
            H = (self.X * self.curv[:, None]).T @ self.X / self.n
        return linalg.symmetrize(0.5 * (H + H.T) + self.shift * np.eye(self.dim))

    def smoothness(self) -> float:
        """max_i ||H_i + shift I||_2."""
        if self._L is None:
            if self.stack is not None:
                top = max(float(np.max(np.abs(np.linalg.eigvalsh(Hi)))) for Hi in self.stack)
            else:
                top = float(np.max(self.curv * np.einsum("ij,ij->i", self.X, self.X)))
            self._L = top + self.shift
        return self._L

    def quadratic(self, u, v) -> float:
        """g(u) = u^T H u / 2 + <v, u>, not charged."""
        u = np.asarray(u, dtype=np.float64)
        return float(0.5 * u @ self._batch(u) + np.asarray(v) @ u)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "cg"
    max_iters: int = 100  # CG iterations; SGD/LiSSA steps per run
    step_size: float | None = None  # default depends on method, see _default_step
    epochs: int = 20  # SVRG epochs / Catalyst outer iterations
    epoch_len: int | None = None  # SVRG/Catalyst inner steps, default 2n
    repeats: int = 1  # LiSSA S
    rank: int | None = None  # Arnoldi k, default krylov_dim
    krylov_dim: int | None = None  # Arnoldi T, default d
    seed: int = 0
    tol: float | None = None  # target for ||u - u*||_H^2 where measurable
    cg_stop: float = 1e-12  # CG stops when ||r|| <= cg_stop * ||v||
    damping: float = 0.0  # extra lambda added to the oracle shift
    sgd_init: str = "zero"  # or "minus_v"
    tail_average: bool = True
    catalyst_kappa: float | None = None
    catalyst_beta: float | None = None
    catalyst_mu: float | None = None  # lower bound on lambda_min; estimated if None
    inner_epochs: int = 1
    trace: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 0 or self.epochs < 0 or self.repeats < 1:
            raise ValueError("iteration counts must be nonnegative and repeats >= 1")
        if self.rank is not None and self.krylov_dim is not None and self.rank > self.krylov_dim:
            raise ValueError("rank must not exceed krylov_dim")
        if self.sgd_init not in ("zero", "minus_v"):
            raise ValueError("sgd_init must be 'zero' or 'minus_v'")


@dataclass(frozen=True)
class IhvpSolution:
    u: np.ndarray
    oracle_calls: int
    iterations: int
    method: str
    residual_norm: float
    meta: dict = field(default_factory=dict)
    trace: np.ndarray | None = None


def _finish(oracle: HvpOracle, v, u, calls, iters, method, meta, trace=None) -> IhvpSolution:
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise DivergedNonFinite(f"{method} produced a non-finite iterate")
    # Diagnostic residual; one batch HVP that is deliberately not charged.
    res = linalg.norm(oracle._batch(u) + v)
    return IhvpSolution(u, int(calls), int(iters), method, res, meta, trace)


def _default_step(method: str, L: float) -> float:
    return {"sgd": 1.0 / (2 * L), "lissa": 1.0 / L, "svrg": 1.0 / (4 * L), "accel_svrg": 1.0 / (4 * L)}[method]


# ---------------------------------------------------------------------- exact

def solve_exact(H, v, damping: float = 0.0, n: int = 1) -> IhvpSolution:
    """u = -(H + damping I)^{-1} v by Cholesky; charged ``n * d`` calls
    (the cost of materializing H column by column)."""
    H = linalg.symmetrize(H)
    v = np.asarray(v, dtype=np.float64)
    A = H + damping * np.eye(H.shape[0])
    u = -linalg.cholesky_solve(A, v)
    res = linalg.norm(A @ u + v)
    return IhvpSolution(u, n * H.shape[0], 0, "exact", res, {"damping": damping})


def _exact(oracle: HvpOracle, v, cfg) -> IhvpSolution:
    sol = solve_exact(oracle.dense(), v, 0.0, oracle.n)
    oracle.charge(sol.oracle_calls)
    return replace(sol, meta={"shift": oracle.shift})


# ---------------------------------------------------------------------- CG

def solve_cg(oracle: HvpOracle, v, cfg: SolverConfig = SolverConfig(), callback: Callable | None = None) -> IhvpSolution:
    """Conjugate gradient on H u = -v from u_0 = 0.

    The residual is updated by the recurrence ``r <- r - alpha H d``, which is
    algebraically the recomputed ``-v - H u`` and keeps the cost at one batch
    HVP per iteration.  ``callback(t, u, calls)`` sees every iterate.
    """
    v = np.asarray(v, dtype=np.float64)
    start = oracle.calls
    u = np.zeros_like(v)
    r = -v.copy()
    d = r.copy()
    rr = float(r @ r)
    stop = cfg.cg_stop * linalg.norm(v)
    if callback:
        callback(0, u, 0)
    t = 0
    while t < cfg.max_iters and math.sqrt(rr) > stop:
        Hd = oracle.batch_hvp(d)
        curv = float(d @ Hd)
        if curv <= 1e-300:
            raise BreakdownZeroCurvature(f"d^T H d = {curv:.3e} at iteration {t}")
        alpha = float(d @ r) / curv
        u = u + alpha * d
        r = r - alpha * Hd
        rr_new = float(r @ r)
        d = r + (rr_new / rr) * d
        rr = rr_new
        t += 1
        if callback:
            callback(t, u, oracle.calls - start)
    return _finish(oracle, v, u, oracle.calls - start, t, "cg", {"cg_stop": cfg.cg_stop})


# ---------------------------------------------------------------------- SGD / LiSSA

def _sgd_kernel(oracle: HvpOracle, v, u0, gamma, idx, tail_start, form, trace):
    if oracle.rank_one:
        out = kernels.sgd_rank1(oracle.X, oracle.curv, oracle.shift, v, u0, gamma, idx, tail_start, form, trace)
    else:
        out = kernels.sgd_dense(oracle.stack, oracle.shift, v, u0, gamma, idx, tail_start, form, trace)
    u_last, acc, n_tail, tr, bad = out
    if bad >= 0:
        raise DivergedNonFinite(f"non-finite iterate by step {bad}; step size {gamma:.3e} is too large")
    return np.asarray(u_last), np.asarray(acc), n_tail, tr


def solve_sgd(oracle: HvpOracle, v, cfg: SolverConfig = SolverConfig(method="sgd")) -> IhvpSolution:
    """u_{t+1} = u_t - gamma (H_{i_t} u_t + v), i_t uniform with replacement.

    Returns the average of iterates ``t`` in ``(T/2, T]`` unless
    ``cfg.tail_average`` is off.  One oracle call per step.
    """
    v = np.asarray(v, dtype=np.float64)
    T = cfg.max_iters
    gamma = cfg.step_size or _default_step("sgd", oracle.smoothness())
    u0 = np.zeros_like(v) if cfg.sgd_init == "zero" else -v
    idx = rng.indices(cfg.seed, oracle.n, T)
    tail_start = T // 2 + 1
    u_last, acc, n_tail, tr = _sgd_kernel(oracle, v, u0, gamma, idx, tail_start, 0, cfg.trace)
    oracle.charge(T)
    u = acc / n_tail if (cfg.tail_average and n_tail) else u_last
    meta = {"step_size": gamma, "tail_average": cfg.tail_average, "init": cfg.sgd_init}
    return _finish(oracle, v, u, T, T, "sgd", meta, tr)


def solve_lissa(oracle: HvpOracle, v, cfg: SolverConfig = SolverConfig(method="lissa")) -> IhvpSolution:
    """S independent runs of u_{t+1} = -gamma v + u_t - gamma H_{i_t} u_t from u_0 = -v, averaged.

    The fixed point of this recurrence is already -H^{-1} v, so the average
    needs no rescaling.  Run ``s`` reads draws ``s*T .. (s+1)*T - 1`` of the
    seeded index stream, so run 0 shares SGD's sample stream.
    """
    v = np.asarray(v, dtype=np.float64)
    T, S = cfg.max_iters, cfg.repeats
    gamma = cfg.step_size or _default_step("lissa", oracle.smoothness())
    total = np.zeros_like(v)
    traces = []
    for s in range(S):
        idx = rng.indices(cfg.seed, oracle.n, T, start=s * T)
        u_last, _, _, tr = _sgd_kernel(oracle, v, -v, gamma, idx, T + 1, 1, cfg.trace)
        total += u_last
        if cfg.trace:
            traces.append(tr)
    oracle.charge(S * T)
    tr = None
    if cfg.trace:
        tr = traces[0] if S == 1 else np.stack(traces)
    return _finish(oracle, v, total / S, S * T, T, "lissa", {"step_size": gamma, "repeats": S}, tr)


# ---------------------------------------------------------------------- SVRG

def _svrg_epoch(oracle: HvpOracle, shift_extra, v_eff, u0, gamma, idx):
    """One epoch on g(u) + (shift_extra/2)||u||^2 with linear term v_eff."""
    anchor = oracle.batch_hvp(u0) + shift_extra * u0 + v_eff
    shift = oracle.shift + shift_extra
    if oracle.rank_one:
        u, bad = kernels.svrg_epoch_rank1(oracle.X, oracle.curv, shift, u0, anchor, gamma, idx)
    else:
        u, bad = kernels.svrg_epoch_dense(oracle.stack, shift, u0, anchor, gamma, idx)
    if bad >= 0:
        raise DivergedNonFinite(f"non-finite SVRG iterate by step {bad}; step size {gamma:.3e} is too large")
    oracle.charge(2 * len(idx))
    return np.asarray(u)


def solve_svrg(oracle: HvpOracle, v, cfg: SolverConfig = SolverConfig(method="svrg"), callback: Callable | None = None) -> IhvpSolution:
    """SVRG on g from u = 0.

    Each epoch anchors at its start point with the full gradient
    ``H u_0 + v`` (n calls) and takes ``epoch_len`` variance-reduced steps
    ``u <- u - gamma (H_i u - H_i u_0 + H u_0 + v)`` (2 calls each).
    ``callback(epoch, u, calls)`` runs after every epoch.
    """
    v = np.asarray(v, dtype=np.float64)
    start = oracle.calls
    T = cfg.epoch_len or 2 * oracle.n
    gamma = cfg.step_size or _default_step("svrg", oracle.smoothness())
    u = np.zeros_like(v)
    if callback:
        callback(0, u, 0)
    for s in range(cfg.epochs):
        idx = rng.indices(cfg.seed, oracle.n, T, start=s * T)
        u = _svrg_epoch(oracle, 0.0, v, u, gamma, idx)
        if callback:
            callback(s + 1, u, oracle.calls - start)
    meta = {"step_size": gamma, "epoch_len": T}
    return _finish(oracle, v, u, oracle.calls - start, cfg.epochs, "svrg", meta)


def solve_accel_svrg(oracle: HvpOracle, v, cfg: SolverConfig = SolverConfig(method="accel_svrg"), callback: Callable | None = None) -> IhvpSolution:
    """Catalyst acceleration of SVRG.

    Outer step k approximately minimizes ``g(x) + (kappa/2)||x - y_k||^2`` with
    ``inner_epochs`` SVRG epochs warm-started at ``x_k``, then extrapolates
    ``y_{k+1} = x_{k+1} + beta (x_{k+1} - x_k)``.  Defaults follow the
    strongly convex Catalyst choice ``kappa = L/(n+1) - mu`` (floored at 0)
    and ``beta = (1 - sqrt(q)) / (1 + sqrt(q))`` with ``q = mu / (mu + kappa)``.
    With ``kappa = beta = 0`` this is plain SVRG.
    """
    v = np.asarray(v, dtype=np.float64)
    start = oracle.calls
    n = oracle.n
    L = oracle.smoothness()
    T = cfg.epoch_len or 2 * n
    meta: dict = {}
    mu = cfg.catalyst_mu
    if mu is None and (cfg.catalyst_kappa is None or cfg.catalyst_beta is None):
        mu = _estimate_mu(oracle, cfg.seed)
        meta["mu_estimated"] = True
    kappa = cfg.catalyst_kappa if cfg.catalyst_kappa is not None else max(L / (n + 1) - mu, 0.0)
    if cfg.catalyst_beta is not None:
        beta = cfg.catalyst_beta
    else:
        q = mu / (mu + kappa) if kappa > 0 else 1.0
        beta = (1 - math.sqrt(q)) / (1 + math.sqrt(q))
    gamma = cfg.step_size or 1.0 / (4 * (L + kappa))
    x = np.zeros_like(v)
    y = x.copy()
    if callback:
        callback(0, x, oracle.calls - start)
    epoch = 0
    for k in range(cfg.epochs):
        x_prev = x
        z = x
        for _ in range(cfg.inner_epochs):
            idx = rng.indices(cfg.seed, n, T, start=epoch * T)
            z = _svrg_epoch(oracle, kappa, v - kappa * y, z, gamma, idx)
            epoch += 1
        x = z
        y = x + beta * (x - x_prev)
        if callback:
            callback(k + 1, x, oracle.calls - start)
    meta.update({"step_size": gamma, "epoch_len": T, "kappa": kappa, "beta": beta, "mu": mu})
    return _finish(oracle, v, x, oracle.calls - start, cfg.epochs, "accel_svrg", meta)


def _estimate_mu(oracle: HvpOracle, seed: int) -> float:
    """Smallest Ritz value of a full Krylov sweep (charged to the oracle)."""
    u0 = rng.normal(seed ^ 0x5DEECE66D, oracle.dim)
    fact = arnoldi_factorize(oracle, u0, oracle.dim, oracle.dim)
    return max(float(fact.all_ritz[-1]), 1e-300)


# ---------------------------------------------------------------------- Arnoldi / low rank

@dataclass(frozen=True)
class ArnoldiFactorization:
    eigenvalues: np.ndarray  # top-k Ritz values, descending (Lambda)
    basis: np.ndarray  # W, shape (T, d), orthonormal rows
    ritz_vectors: np.ndarray  # top-k eigenvectors of the reduced matrix, shape (T, k)
    all_ritz: np.ndarray  # every Ritz value, descending
    krylov_dim: int  # T actually reached
    breakdown: bool
    oracle_calls: int

    def project(self, u) -> np.ndarray:
        """G u = (<u, W^T e_1>, ..., <u, W^T e_k>)."""
        return self.ritz_vectors.T @ (self.basis @ np.asarray(u, dtype=np.float64))

    def lift(self, c) -> np.ndarray:
        return self.basis.T @ (self.ritz_vectors @ c)


def arnoldi_factorize(oracle: HvpOracle, u0, krylov_dim: int, rank: int) -> ArnoldiFactorization:
    """Arnoldi iteration with full (twice-applied classical Gram-Schmidt) reorthogonalization.

    Stops early, flagging ``breakdown``, when the new direction vanishes
    (norm <= 1e-14 relative to the HVP it came from), i.e. an invariant
    subspace was found.  Costs one batch HVP per Krylov step.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    d = u0.size
    if not 1 <= rank <= krylov_dim <= d:
        raise ValueError(f"need 1 <= rank ({rank}) <= krylov_dim ({krylov_dim}) <= dim ({d})")
    nu = linalg.norm(u0)
    if nu == 0:
        raise ValueError("starting vector must be nonzero")
    start = oracle.calls
    W = np.zeros((krylov_dim + 1, d))
    A = np.zeros((krylov_dim + 1, krylov_dim))
    W[0] = u0 / nu
    T = krylov_dim
    breakdown = False
    for t in range(krylov_dim):
        hw = oracle.batch_hvp(W[t])
        u = hw.copy()
        h = W[: t + 1] @ u
        u -= W[: t + 1].T @ h
        h2 = W[: t + 1] @ u
        u -= W[: t + 1].T @ h2
        A[: t + 1, t] = h + h2
        beta = linalg.norm(u)
        A[t + 1, t] = beta
        if t + 1 < krylov_dim and beta <= 1e-14 * max(linalg.norm(hw), 1e-300):
            T = t + 1
            breakdown = True
            break
        if t + 1 < krylov_dim:
            W[t + 1] = u / beta
    At = A[:T, :T]
    eig = linalg.sym_eigen(0.5 * (At + At.T))
    k = min(rank, T)
    return ArnoldiFactorization(
        eigenvalues=eig.eigenvalues[:k].copy(),
        basis=W[:T].copy(),
        ritz_vectors=eig.eigenvectors[:, :k].copy(),
        all_ritz=eig.eigenvalues.copy(),
        krylov_dim=T,
        breakdown=breakdown,
        oracle_calls=oracle.calls - start,
    )


def solve_lowrank(fact: ArnoldiFactorization, v, grad_h=None):
    """Rank-k inverse through a cached factorization.

    With ``grad_h`` returns the scalar ``<G grad_h, Lambda^{-1} G v>``, an
    estimate of ``<grad_h, H^{-1} v>``.  Without it returns the vector
    ``-W^T E Lambda^{-1} E^T W v``, the rank-k estimate of ``-H^{-1} v``.
    """
    lam = fact.eigenvalues
    if np.any(lam <= 0):
        raise NonpositiveRitzValue(f"retained Ritz value {lam.min():.3e} is not positive")
    Gv = fact.project(v)
    if grad_h is not None:
        return float(fact.project(grad_h) @ (Gv / lam))
    return -fact.lift(Gv / lam)


def solve_arnoldi(oracle: HvpOracle, v, cfg: SolverConfig = SolverConfig(method="arnoldi"), u0=None) -> IhvpSolution:
    v = np.asarray(v, dtype=np.float64)
    T = cfg.krylov_dim or oracle.dim
    k = cfg.rank or T
    if u0 is None:
        u0 = rng.normal(cfg.seed, oracle.dim)
    start = oracle.calls
    fact = arnoldi_factorize(oracle, u0, T, k)
    u = solve_lowrank(fact, v)
    meta = {"rank": int(fact.eigenvalues.size), "krylov_dim": fact.krylov_dim, "breakdown": fact.breakdown}
    return _finish(oracle, v, u, oracle.calls - start, fact.krylov_dim, "arnoldi", meta)


# ---------------------------------------------------------------------- dispatch

def solve(oracle: HvpOracle, v, cfg: SolverConfig) -> IhvpSolution:
    """Run ``cfg.method`` on ``oracle`` shifted by ``cfg.damping``."""
    if cfg.damping:
        oracle = oracle.with_shift(cfg.damping)
    fn = {
        "exact": _exact,
        "cg": solve_cg,
        "sgd": solve_sgd,
        "lissa": solve_lissa,
        "svrg": solve_svrg,
        "accel_svrg": solve_accel_svrg,
        "arnoldi": solve_arnoldi,
    }[cfg.method]
    return fn(oracle, v, cfg)


def declared_calls(cfg: SolverConfig, n: int, dim: int) -> int:
    """Oracle calls a run of ``cfg`` spends by construction (Arnoldi: without breakdown)."""
    T = cfg.epoch_len or 2 * n
    return {
        "exact": n * dim,
        "sgd": cfg.max_iters,
        "lissa": cfg.repeats * cfg.max_iters,
        "svrg": cfg.epochs * (n + 2 * T),
        "accel_svrg": cfg.epochs * cfg.inner_epochs * (n + 2 * T),
        "arnoldi": (cfg.krylov_dim or dim) * n,
    }[cfg.method]


def h_norm_sq_error(u, u_star, H) -> float:
    e = np.asarray(u) - np.asarray(u_star)
    return float(e @ (H @ e))


# ---------------------------------------------------------------------- theory helpers

def predict_cost(method: str, kappa: float, delta: float, sigma2: float, n: int, eps: float, decay=None) -> float:
    """Leading-order HVP-call counts with all constants set to 1.

    ``decay`` is ``("poly", beta)`` or ``("exp", nu)`` and is required for
    ``lowrank``.  Logarithms are floored at zero: once ``eps`` exceeds the
    scale inside the log there is nothing left to do.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    log_plain = max(math.log(delta / eps), 0.0) if delta > 0 else 0.0
    log_k = max(math.log(kappa * delta / eps), 0.0) if delta > 0 else 0.0
    if method == "cg":
        return n * math.sqrt(kappa) * log_plain
    if method == "sgd":
        return sigma2 / eps + kappa * log_k
    if method == "svrg":
        return (n + kappa) * log_k
    if method == "accel_svrg":
        return (n + math.sqrt(n * kappa)) * log_k
    if method in ("lowrank", "arnoldi"):
        if decay is None or decay[0] not in ("poly", "exp"):
            raise UnsupportedDecay("low-rank cost needs decay=('poly', beta) or ('exp', nu)")
        kind, rate = decay
        if kind == "poly":
            if rate <= 1:
                raise UnsupportedDecay("polynomial decay needs beta > 1")
            return n * (kappa * delta / eps) ** (1.0 / (rate - 1.0))
        return n / rate * log_k
    raise ValueError(f"no cost formula for method {method!r}")


def sgd_noise_sigma2(oracle: HvpOracle, H, influence) -> float:
    """Tr(Sigma) + d ||Sigma||_2 for the SGD gradient-noise covariance

    Sigma = (1/n) sum_i W_i a a^T W_i,  a = H^{1/2} I,  W_i = H^{-1/2} H_i H^{-1/2} - I.

    Uses ``W_i a = H^{-1/2} (H_i I - H I)``; spends n oracle calls.
    """
    I = np.asarray(influence, dtype=np.float64)
    H = linalg.symmetrize(H)
    _, H_inv_half = linalg.spd_inverse_sqrt(H)
    HI = H @ I
    B = np.empty((oracle.n, I.size))
    for i in range(oracle.n):
        B[i] = H_inv_half @ (oracle.point_hvp(i, I) - HI)
    Sigma = B.T @ B / oracle.n
    top = linalg.sym_eigen(Sigma).eigenvalues[0]
    return float(np.trace(Sigma) + I.size * max(top, 0.0))


DAMPING_GRID = (0.0,) + tuple(10.0**k for k in range(-6, 3))


def select_damping(oracle: HvpOracle, v, grid=DAMPING_GRID, probe_iters: int = 20, seed: int = 0) -> float:
    """Smallest lambda in ``grid`` for which the damped quadratic is bounded
    below along ``probe_iters`` SGD iterates.

    A quadratic is bounded below on a subspace iff its Hessian restricted to
    that subspace is PSD.  Each probe runs SGD (step ``1 / L``) from 0, takes
    the span of the iterates, and checks the restricted matrix ``Q^T (H + lambda I) Q``
    (one batch HVP per basis vector).  Probes must also stay finite.
    All probe calls are charged to ``oracle``.
    """
    v = np.asarray(v, dtype=np.float64)
    idx = rng.indices(seed, oracle.n, probe_iters)
    for lam in grid:
        probe = oracle.with_shift(lam)
        gamma = 1.0 / max(abs(probe.smoothness()), 1e-300)
        u = np.zeros_like(v)
        iterates = []
        finite = True
        for i in idx:
            u = u - gamma * (probe.point_hvp(i, u) + v)
            if not np.all(np.isfinite(u)):
                finite = False
                break
            iterates.append(u)
        ok = finite and _bounded_on_span(probe, iterates)
        oracle.charge(probe.calls)
        if ok:
            return float(lam)
    raise NotPositiveDefinite("no damping value in the grid keeps the quadratic bounded below")


def _bounded_on_span(oracle: HvpOracle, vectors) -> bool:
    if not vectors:
        return True
    Q, R = np.linalg.qr(np.array(vectors).T)
    keep = np.abs(np.diagonal(R)) > 1e-10 * max(np.abs(np.diagonal(R)).max(), 1e-300)
    Q = Q[:, keep]
    if Q.shape[1] == 0:
        return True
    M = np.array([Q.T @ oracle.batch_hvp(q) for q in Q.T])
    lam = linalg.sym_eigen(0.5 * (M + M.T)).eigenvalues
    return bool(lam[-1] >= -1e-12 * max(abs(lam[0]), 1e-300))
