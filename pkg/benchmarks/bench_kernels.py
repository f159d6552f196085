"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` wall time for each
backend and the speedup.  Both backends run on identical inputs and their
outputs are checked to agree before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from influence_lab import _pykernels, rng

try:
    from influence_lab import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases():
    g = np.random.default_rng(0)
    n, p = 2000, 10
    X = g.standard_normal((n, p))
    c = g.uniform(0.05, 0.25, n)
    v = g.standard_normal(p)
    idx = rng.indices(1, n, 200_000)
    u0 = np.zeros(p)
    gamma = 1.0 / (4 * c.max() * np.max(np.einsum("ij,ij->i", X, X)))
    anchor = X.T @ (c * (X @ u0)) / n + v
    stack = np.einsum("i,ij,ik->ijk", c[:200], X[:200], X[:200])
    idx_small = rng.indices(2, 200, 50_000)
    M = g.standard_normal((40, 40))
    A = M @ M.T + 40 * np.eye(40)
    S = M + M.T
    return {
        "sgd_rank1 (200k steps, p=10)": lambda k: k.sgd_rank1(X, c, 0.0, v, u0, gamma, idx, 100_001, 0, False)[0],
        "sgd_dense (50k steps, p=10)": lambda k: k.sgd_dense(stack, 0.0, v, u0, gamma, idx_small, 25_001, 0, False)[0],
        "svrg_epoch_rank1 (200k steps)": lambda k: k.svrg_epoch_rank1(X, c, 0.0, u0, anchor, gamma, idx)[0],
        "cholesky_factor (40x40)": lambda k: k.cholesky_factor(A)[0],
        "jacobi_eigen (40x40)": lambda k: k.jacobi_eigen(S, 1e-14, 100)[0],
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the numpy fallback is available")
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:32s} {t_py:11.4f} {'-':>11s} {'-':>8s}")
            continue
        a, b = fn(_pykernels), fn(_ckernels)
        if not np.allclose(np.sort(np.ravel(a)), np.sort(np.ravel(b)), rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat))
        print(f"{name:32s} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
