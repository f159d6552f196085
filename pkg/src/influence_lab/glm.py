"""Generalized linear model losses with per-point derivatives.

Four families are supported:

=================  ==============  ==================================================  ==========
family             response        loss (eta = theta^T x)                              R
=================  ==============  ==================================================  ==========
least_squares      real            (y - eta)^2 / 2                                     0
logistic           {-1, +1}        log(1 + exp(-y eta))                                ||x||
poisson            {0, 1, 2, ...}  -y eta + exp(eta) + log(y!)                         ||x||
multiclass (K)     {1, ..., K}     log(1 + sum_{k>=2} exp(w_k^T x)) - w_y^T x          2 ||x||
=================  ==============  ==================================================  ==========

The multiclass model keeps class 1 as the reference (``w_1 = 0``) and stores
``theta`` as the row-major flattening of the ``(K-1, p)`` weight matrix.  The
reference table this follows writes the loss as
``log(1 + sum_{i=1}^K e^{w_i^T x}) - sum_{i=2}^K y_i (w_i^T x)``; with ``w_1``
pinned to zero that is the standard softmax likelihood up to the ``i = 1``
term, and we implement the standard likelihood.

Every loss carries the ridge term ``(ridge / 2) ||theta||^2``, so gradients,
Hessians and Hessian-vector products all include it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainMismatch, EmptyDataset

FAMILIES = ("least_squares", "logistic", "poisson", "multiclass")


class DataPoint(NamedTuple):
    x: np.ndarray
    y: float


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and responses ``y`` for one loss family."""

    X: np.ndarray
    y: np.ndarray
    family: str
    n_classes: int = 2
    dropped_rows: int = 0
    feature_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1:
            raise EmptyDataset("dataset has no points")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} rows in X but {y.shape[0]} responses")
        check_responses(self.family, y, self.n_classes)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def point(self, i: int) -> DataPoint:
        return DataPoint(self.X[i], float(self.y[i]))

    def head(self, n: int) -> Dataset:
        """First ``n`` points (prefix subsampling)."""
        return Dataset(self.X[:n], self.y[:n], self.family, self.n_classes)

    def take(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.family, self.n_classes)

    def __len__(self) -> int:
        return self.n


def check_responses(family: str, y: np.ndarray, n_classes: int = 2) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if not np.all(np.isfinite(y)):
        raise DomainMismatch("responses must be finite")
    if family == "logistic":
        if not np.all((y == 1.0) | (y == -1.0)):
            raise DomainMismatch("logistic responses must be -1 or +1")
    elif family == "poisson":
        if not np.all((y >= 0) & (y == np.floor(y))):
            raise DomainMismatch("poisson responses must be nonnegative integers")
    elif family == "multiclass":
        if n_classes < 2:
            raise DomainMismatch("multiclass needs at least 2 classes")
        if not np.all((y >= 1) & (y <= n_classes) & (y == np.floor(y))):
            raise DomainMismatch(f"multiclass responses must be integers in 1..{n_classes}")


def softplus(t):
    """log(1 + exp(t)) without overflow."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _log_factorial(y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    return np.array([math.lgamma(v + 1.0) for v in y])


@dataclass(frozen=True)
class LossModel:
    family: str
    ridge: float = 0.0
    n_classes: int = 2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.family == "multiclass" and self.n_classes < 2:
            raise DomainMismatch("multiclass needs at least 2 classes")

    @property
    def scalar_link(self) -> bool:
        """True when every per-point Hessian is c * x x^T (+ ridge)."""
        return self.family != "multiclass"

    def param_dim(self, p: int) -> int:
        return p * (self.n_classes - 1) if self.family == "multiclass" else p

    # ------------------------------------------------------------------ single point

    def _check(self, z: DataPoint, theta) -> tuple[np.ndarray, float, np.ndarray]:
        x = np.asarray(z.x, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_dim(x.size),):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.param_dim(x.size)},)")
        check_responses(self.family, np.array([z.y], dtype=np.float64), self.n_classes)
        return x, float(z.y), theta

    def loss(self, z: DataPoint, theta) -> float:
        x, y, theta = self._check(z, theta)
        return float(self.losses(x[None, :], np.array([y]), theta)[0])

    def grad(self, z: DataPoint, theta) -> np.ndarray:
        x, y, theta = self._check(z, theta)
        return self.grads(x[None, :], np.array([y]), theta)[0]

    def hess_vec(self, z: DataPoint, theta, u) -> np.ndarray:
        x, y, theta = self._check(z, theta)
        u = np.asarray(u, dtype=np.float64)
        if u.shape != theta.shape:
            raise ValueError("u and theta dimensions differ")
        if self.scalar_link:
            c = self.curvatures(x[None, :], np.array([y]), theta)[0]
            return c * (x @ u) * x + self.ridge * u
        pi = self._probs(x[None, :], theta)[0]
        a = u.reshape(-1, x.size) @ x
        b = pi * a - pi * (pi @ a)
        return np.outer(b, x).ravel() + self.ridge * u

    def hess_full(self, z: DataPoint, theta) -> np.ndarray:
        x, y, theta = self._check(z, theta)
        return self.point_hessians(x[None, :], np.array([y]), theta)[0] + self.ridge * np.eye(theta.size)

    def self_concordance_R(self, z: DataPoint) -> float:
        r = float(np.linalg.norm(np.asarray(z.x, dtype=np.float64)))
        return {"least_squares": 0.0, "logistic": r, "poisson": r, "multiclass": 2.0 * r}[self.family]

    def smoothness_L(self, data: Dataset, radius: float = 5.0) -> float:
        """Upper bound on ||Hessian of one point's loss||_2 over the dataset.

        Poisson curvature is unbounded in theta; the bound holds on the ball
        ``||theta||_2 <= radius`` only.
        """
        if data.n == 0:
            raise EmptyDataset("smoothness of an empty dataset")
        sq = float(np.max(np.einsum("ij,ij->i", data.X, data.X)))
        if self.family == "least_squares":
            base = sq
        elif self.family == "logistic":
            base = sq / 4.0
        elif self.family == "multiclass":
            base = sq / 2.0
        else:
            base = sq * math.exp(radius * math.sqrt(sq))
        return base + self.ridge

    # ------------------------------------------------------------------ batched, no ridge unless stated

    def _probs(self, X: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Softmax probabilities of classes 2..K, shape (n, K-1)."""
        S = X @ theta.reshape(self.n_classes - 1, X.shape[1]).T
        m = np.maximum(S.max(axis=1, keepdims=True), 0.0)
        E = np.exp(S - m)
        return E / (np.exp(-m) + E.sum(axis=1, keepdims=True))

    def losses(self, X, y, theta) -> np.ndarray:
        """Per-point losses including the ridge term."""
        theta = np.asarray(theta, dtype=np.float64)
        pen = 0.5 * self.ridge * float(theta @ theta)
        if self.family == "multiclass":
            S = X @ theta.reshape(self.n_classes - 1, X.shape[1]).T
            m = np.maximum(S.max(axis=1), 0.0)
            lse = m + np.log(np.exp(-m) + np.exp(S - m[:, None]).sum(axis=1))
            k = y.astype(np.intp)
            picked = np.where(k >= 2, S[np.arange(len(k)), np.maximum(k - 2, 0)], 0.0)
            return lse - picked + pen
        eta = X @ theta
        if self.family == "least_squares":
            r = y - eta
            return 0.5 * r * r + pen
        if self.family == "logistic":
            return softplus(-y * eta) + pen
        return -y * eta + np.exp(eta) + _log_factorial(y) + pen

    def link_derivative(self, X, y, theta) -> np.ndarray:
        """d loss / d eta per point (scalar-link families)."""
        eta = X @ theta
        if self.family == "least_squares":
            return eta - y
        if self.family == "logistic":
            return -y * sigmoid(-y * eta)
        return np.exp(eta) - y

    def curvatures(self, X, y, theta) -> np.ndarray:
        """d^2 loss / d eta^2 per point (scalar-link families)."""
        eta = X @ np.asarray(theta, dtype=np.float64)
        if self.family == "least_squares":
            return np.ones(X.shape[0])
        if self.family == "logistic":
            return sigmoid(eta) * sigmoid(-eta)
        if self.family == "poisson":
            return np.exp(eta)
        raise ValueError("curvatures are defined for scalar-link families only")

    def grads(self, X, y, theta) -> np.ndarray:
        """Per-point gradients including ridge, shape (n, d)."""
        theta = np.asarray(theta, dtype=np.float64)
        if self.family == "multiclass":
            P = self._probs(X, theta)
            k = y.astype(np.intp)
            P[np.arange(len(k))[k >= 2], k[k >= 2] - 2] -= 1.0
            G = (P[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1)
        else:
            G = self.link_derivative(X, y, theta)[:, None] * X
        return G + self.ridge * theta

    def point_hessians(self, X, y, theta) -> np.ndarray:
        """Per-point Hessians WITHOUT the ridge term, shape (n, d, d)."""
        theta = np.asarray(theta, dtype=np.float64)
        if self.scalar_link:
            c = self.curvatures(X, y, theta)
            return c[:, None, None] * X[:, :, None] * X[:, None, :]
        P = self._probs(X, theta)
        K1, p = self.n_classes - 1, X.shape[1]
        C = -P[:, :, None] * P[:, None, :]
        C[:, np.arange(K1), np.arange(K1)] += P
        XX = X[:, :, None] * X[:, None, :]
        H = C[:, :, None, :, None] * XX[:, None, :, None, :]
        return H.reshape(X.shape[0], K1 * p, K1 * p)

    def weighted_hessian(self, X, y, theta, w) -> np.ndarray:
        """sum_i w_i Hessian_i, ridge included (scaled by sum w)."""
        theta = np.asarray(theta, dtype=np.float64)
        d = theta.size
        if self.scalar_link:
            c = self.curvatures(X, y, theta) * w
            H = (X * c[:, None]).T @ X
        else:
            P = self._probs(X, theta)
            K1, p = self.n_classes - 1, X.shape[1]
            H = np.zeros((d, d))
            for a in range(K1):
                for b in range(a, K1):
                    coef = (P[:, a] * (a == b) - P[:, a] * P[:, b]) * w
                    blk = (X * coef[:, None]).T @ X
                    H[a * p : (a + 1) * p, b * p : (b + 1) * p] = blk
                    H[b * p : (b + 1) * p, a * p : (a + 1) * p] = blk
        H = 0.5 * (H + H.T)
        return H + self.ridge * float(np.sum(w)) * np.eye(d)


def least_squares(ridge: float = 0.0) -> LossModel:
    return LossModel("least_squares", ridge)


def logistic(ridge: float = 0.0) -> LossModel:
    return LossModel("logistic", ridge)


def poisson(ridge: float = 0.0) -> LossModel:
    return LossModel("poisson", ridge)


def multiclass(n_classes: int, ridge: float = 0.0) -> LossModel:
    return LossModel("multiclass", ridge, n_classes)


def model_for(data: Dataset, ridge: float = 0.0) -> LossModel:
    return LossModel(data.family, ridge, data.n_classes)
