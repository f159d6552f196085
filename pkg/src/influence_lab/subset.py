"""Most influential subsets through superquantiles.

The subset influence of removing at most ``alpha n`` points equals the
superquantile (CVaR) of the per-point scores when ``alpha n`` is an integer.
Three independent routes to the superquantile are provided: the sorted
discrete formula, the dual ``min_eta eta + E(Z - eta)_+ / (1 - alpha)``
minimized over its breakpoints, and the greedy knapsack weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ihvp
from .errors import EmptyInput
from .glm import DataPoint, Dataset, LossModel
from .ihvp import HvpOracle, SolverConfig
from .mestim import FitResult

_INT_TOL = 1e-9


def _check(values, alpha) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise EmptyInput("superquantile of no values")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    return v


def removal_count(n: int, alpha: float) -> tuple[int, bool]:
    """(floor(alpha n), whether alpha n is an integer), robust to rounding in alpha * n."""
    an = alpha * n
    r = round(an)
    if abs(an - r) <= _INT_TOL * max(n, 1):
        return int(r), True
    return int(math.floor(an)), False


def _effective_alpha(n: int, alpha: float) -> float:
    """alpha snapped to k/n when alpha n is an integer up to rounding, so all routes see one level."""
    k, exact = removal_count(n, alpha)
    return k / n if exact else alpha


def superquantile(values, alpha: float) -> float:
    """Discrete superquantile of equiprobable values.

    S = sum_{v_i > q} v_i / ((1-alpha) n) + (F(q) - alpha) q / (1 - alpha)
    with q the alpha-quantile and F the empirical CDF.
    """
    v = _check(values, alpha)
    n = v.size
    alpha = _effective_alpha(n, alpha)
    if alpha == 0.0:
        return float(np.mean(v))
    s = np.sort(v)
    k, exact = removal_count(n, alpha)
    pos = max(k, 1) if exact else k + 1  # ceil(alpha n), 1-based
    q = s[pos - 1]
    above = s[s > q]
    F_q = np.count_nonzero(s <= q) / n
    frac = F_q - (k / n if exact else alpha)
    return float(above.sum() / ((1 - alpha) * n) + frac * q / (1 - alpha))


def superquantile_dual(values, alpha: float) -> tuple[float, float]:
    """(value, eta) minimizing eta + sum (v_i - eta)_+ / ((1-alpha) n) over breakpoints.

    The objective is convex piecewise linear with kinks at the v_i, so the
    minimum is attained at one of them; ties go to the smallest breakpoint.
    """
    v = _check(values, alpha)
    n = v.size
    alpha = _effective_alpha(n, alpha)
    s = np.sort(v)
    # suffix sums give sum_i (v_i - eta)_+ for eta = s[j] without an O(n^2) scan
    suffix = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    best_val, best_eta = math.inf, s[0]
    j = 0
    for eta in np.unique(s):
        while j < n and s[j] <= eta:
            j += 1
        tail = suffix[j] - (n - j) * eta
        val = eta + tail / ((1 - alpha) * n)
        if val < best_val - 1e-15 * max(1.0, abs(val)):
            best_val, best_eta = val, eta
    return float(best_val), float(best_eta)


@dataclass(frozen=True)
class SubsetReport:
    sif_value: float
    removed_indices: tuple[int, ...]
    scores: np.ndarray
    alpha: float
    fractional_index: tuple[int, float] | None = None  # (index, weight) when alpha n is not an integer
    greedy_value: float = math.nan  # sum_i w_i v_i at the greedy weights

    @property
    def n(self) -> int:
        return self.scores.size


def greedy_weights(scores, alpha: float) -> tuple[np.ndarray, tuple[int, ...], tuple[int, float] | None]:
    """Continuous-knapsack maximizer of sum w_i v_i over
    {w in simplex, w_i <= 1/((1-alpha) n)}: drop the smallest scores.

    Ties among equal scores remove the lower index first.
    """
    v = _check(scores, alpha)
    n = v.size
    alpha = _effective_alpha(n, alpha)
    order = np.argsort(v, kind="stable")
    k, exact = removal_count(n, alpha)
    cap = 1.0 / ((1 - alpha) * n)
    w = np.full(n, cap)
    removed = tuple(int(i) for i in order[:k])
    w[list(removed)] = 0.0
    frac = None
    if not exact:
        j = int(order[k])  # smallest kept score carries the leftover mass
        w[j] = 1.0 - cap * (n - k - 1)
        frac = (j, float(w[j]))
    return w, removed, frac


def most_influential_subset(scores, alpha: float) -> SubsetReport:
    v = _check(scores, alpha)
    w, removed, frac = greedy_weights(v, alpha)
    return SubsetReport(
        sif_value=superquantile(v, alpha),
        removed_indices=tuple(sorted(removed)),
        scores=v,
        alpha=alpha,
        fractional_index=frac,
        greedy_value=float(w @ v),
    )


def sif_scores(model: LossModel, data: Dataset, fit: FitResult, h_point: DataPoint | None = None,
               solver_cfg: SolverConfig = SolverConfig(method="exact"), grad_h=None) -> np.ndarray:
    """v_i = -<grad h(theta_n), H_n^{-1} grad loss(Z_i, theta_n)>.

    One solve ``u = -H^{-1} grad h`` serves all points: ``v_i = <u, grad loss_i>``.
    ``h`` is ``loss(h_point, .)`` unless ``grad_h`` is given directly.
    """
    if grad_h is None:
        if h_point is None:
            raise ValueError("give h_point or grad_h")
        grad_h = model.grad(h_point, fit.theta)
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if not np.any(grad_h):
        return np.zeros(data.n)
    oracle = HvpOracle.from_glm(model, data, fit.theta)
    u = ihvp.solve(oracle, grad_h, solver_cfg).u
    return model.grads(data.X, data.y, fit.theta) @ u


def population_subset_influence(proxy, alpha: float, h_point: DataPoint | None = None, grad_h=None) -> SubsetReport:
    """Subset influence on the proxy sample, standing in for the population value."""
    scores = sif_scores(proxy.model, proxy.data, proxy.fit, h_point, SolverConfig(method="exact"), grad_h)
    return most_influential_subset(scores, alpha)


def subset_influence_error(empirical: SubsetReport, population: SubsetReport) -> float:
    return (empirical.sif_value - population.sif_value) ** 2


def theorem2_bound(R: float, mu: float, p_eff: float, p: int, alpha: float, n: int,
                   delta: float = 0.05, C: float = 1.0) -> float:
    """C / (1-alpha)^2 * R^2 p_eff / (mu n) * log(max(n, p) / delta).

    ``C`` absorbs the assumption bounds M1, M2, M1', M2'.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if n < 1:
        raise ValueError("n must be at least 1")
    return C / (1 - alpha) ** 2 * R**2 * p_eff / (mu * n) * math.log(max(n, p) / delta)
