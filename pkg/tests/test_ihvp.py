import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from influence_lab import glm, ihvp, linalg, mestim, rng, synthdata
from influence_lab.errors import (
    BreakdownZeroCurvature,
    DivergedNonFinite,
    NonpositiveRitzValue,
    NotPositiveDefinite,
    UnsupportedDecay,
)
from influence_lab.ihvp import HvpOracle, SolverConfig

from conftest import random_spd


@pytest.fixture(scope="module")
def logistic_instance():
    d = synthdata.simulate(synthdata.SimSpec("logistic", 200, p=10, seed=5))
    model = glm.logistic(0.02)
    fit = mestim.fit(model, d)
    oracle = HvpOracle.from_glm(model, d, fit.theta)
    v = model.grad(synthdata.outlier_point(synthdata.SimSpec("logistic", 1, p=10)), fit.theta)
    H = oracle.dense()
    return oracle, v, H, ihvp.solve_exact(H, v).u


def fresh(oracle):
    return oracle.with_shift(0.0)


# ---------------------------------------------------------------- exact


def test_exact_examples(nprng):
    v = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(ihvp.solve_exact(np.eye(3), v).u, -v)
    assert np.allclose(ihvp.solve_exact(np.diag([2.0, 4.0]), np.array([2.0, 4.0])).u, [-1.0, -1.0], atol=0)
    A = random_spd(nprng, 8)
    b = nprng.standard_normal(8)
    assert ihvp.solve_exact(A, b).residual_norm <= 1e-10
    assert np.allclose(ihvp.solve_exact(A, b, damping=0.5).u, -np.linalg.solve(A + 0.5 * np.eye(8), b))
    with pytest.raises(NotPositiveDefinite):
        ihvp.solve_exact(np.diag([1.0, -1.0]), np.ones(2))


# ---------------------------------------------------------------- CG


def test_cg_identity_one_iteration():
    v = np.array([1.0, 2.0, -1.0])
    sol = ihvp.solve_cg(HvpOracle.from_matrix(np.eye(3), 4), v, SolverConfig("cg"))
    assert sol.iterations == 1
    assert np.allclose(sol.u, -v, atol=1e-15)
    assert sol.oracle_calls == 4


def test_cg_at_most_p_iterations(nprng):
    for _ in range(10):
        p = int(nprng.integers(2, 12))
        H = random_spd(nprng, p, cond=50)
        v = nprng.standard_normal(p)
        sol = ihvp.solve_cg(HvpOracle.from_matrix(H, 3), v, SolverConfig("cg", cg_stop=1e-8))
        assert sol.iterations <= p
        assert ihvp.h_norm_sq_error(sol.u, ihvp.solve_exact(H, v).u, H) <= 1e-14


def test_cg_rate_bound_and_monotone(nprng):
    H = random_spd(nprng, 20, cond=400)
    v = nprng.standard_normal(20)
    u_star = ihvp.solve_exact(H, v).u
    kappa = np.linalg.cond(H)
    q = (math.sqrt(kappa) - 1) / (math.sqrt(kappa) + 1)
    e0 = ihvp.h_norm_sq_error(0 * v, u_star, H)
    errs = []
    ihvp.solve_cg(HvpOracle.from_matrix(H, 1), v, SolverConfig("cg", max_iters=20, cg_stop=1e-14),
                  callback=lambda t, u, c: errs.append((t, ihvp.h_norm_sq_error(u, u_star, H))))
    for t, e in errs:
        assert e <= 1.05 * 4 * q ** (2 * t) * e0 + 1e-24
    assert all(b <= a * (1 + 1e-12) + 1e-24 for (_, a), (_, b) in zip(errs, errs[1:]))


def test_cg_breakdown_on_singular():
    with pytest.raises(BreakdownZeroCurvature):
        ihvp.solve_cg(HvpOracle.from_matrix(np.diag([1.0, 0.0]), 1), np.array([0.0, 1.0]), SolverConfig("cg"))


# ---------------------------------------------------------------- SGD / LiSSA


def test_sgd_zero_rhs():
    sol = ihvp.solve_sgd(HvpOracle.from_matrix(np.eye(3), 5), np.zeros(3), SolverConfig("sgd", max_iters=50))
    assert np.array_equal(sol.u, np.zeros(3))


def test_sgd_identity_contraction():
    v, gamma, T = np.array([1.0, -0.5]), 0.1, 30
    cfg = SolverConfig("sgd", max_iters=T, step_size=gamma, tail_average=False)
    sol = ihvp.solve_sgd(HvpOracle.from_matrix(np.eye(2), 7), v, cfg)
    assert np.allclose(sol.u, -(1 - (1 - gamma) ** T) * v, rtol=1e-13)


def test_lissa_neumann_series():
    v = np.array([2.0, -4.0])
    cfg = SolverConfig("lissa", max_iters=3, step_size=1.0)
    sol = ihvp.solve_lissa(HvpOracle.from_matrix(0.5 * np.eye(2), 3), v, cfg)
    assert np.allclose(sol.u, -1.875 * v, rtol=1e-15)
    sol = ihvp.solve_lissa(HvpOracle.from_matrix(np.eye(2), 3), v, SolverConfig("lissa", max_iters=5, step_size=1.0))
    assert np.allclose(sol.u, -v, rtol=1e-15)


def test_sgd_lissa_identical_sequences(logistic_instance):
    oracle, v, H, _ = logistic_instance
    gamma = 1.0 / oracle.smoothness()
    common = dict(max_iters=1000, step_size=gamma, seed=17, trace=True)
    sgd = ihvp.solve_sgd(fresh(oracle), v, SolverConfig("sgd", sgd_init="minus_v", tail_average=False, **common))
    lis = ihvp.solve_lissa(fresh(oracle), v, SolverConfig("lissa", repeats=1, **common))
    diff = np.abs(sgd.trace - lis.trace)
    scale = np.abs(sgd.trace).max()
    assert sgd.trace.shape == (1001, v.size)
    assert diff.max() <= 16 * np.finfo(float).eps * scale


def test_sgd_error_decreases_with_budget(logistic_instance):
    oracle, v, H, u_star = logistic_instance
    errs = [ihvp.h_norm_sq_error(ihvp.solve_sgd(fresh(oracle), v, SolverConfig("sgd", max_iters=T)).u, u_star, H)
            for T in (2_000, 20_000, 200_000)]
    assert errs[0] > errs[1] > errs[2]


def test_sgd_divergence_reported():
    with pytest.raises(DivergedNonFinite):
        ihvp.solve_sgd(HvpOracle.from_matrix(np.eye(2), 3), np.ones(2), SolverConfig("sgd", max_iters=5000, step_size=3.0))


# ---------------------------------------------------------------- SVRG


def test_svrg_zero_rhs_and_tiny_step(logistic_instance):
    oracle, v, H, _ = logistic_instance
    assert np.array_equal(ihvp.solve_svrg(fresh(oracle), 0 * v, SolverConfig("svrg", epochs=2)).u, 0 * v)
    # gamma -> 0: the single epoch barely moves from u0 = 0
    sol = ihvp.solve_svrg(fresh(oracle), v, SolverConfig("svrg", epochs=1, step_size=1e-300))
    assert np.all(np.abs(sol.u) < 1e-290)


def test_svrg_converges(logistic_instance):
    oracle, v, H, u_star = logistic_instance
    sol = ihvp.solve_svrg(fresh(oracle), v, SolverConfig("svrg", epochs=30))
    assert ihvp.h_norm_sq_error(sol.u, u_star, H) <= 1e-12


def test_accel_degenerate_is_svrg(logistic_instance):
    oracle, v, H, _ = logistic_instance
    L = oracle.smoothness()
    a = ihvp.solve_svrg(fresh(oracle), v, SolverConfig("svrg", epochs=5, seed=3))
    b = ihvp.solve_accel_svrg(fresh(oracle), v, SolverConfig("accel_svrg", epochs=5, seed=3, catalyst_kappa=0.0,
                                                           catalyst_beta=0.0, step_size=1 / (4 * L)))
    assert np.allclose(a.u, b.u, rtol=1e-13, atol=1e-15)
    assert a.oracle_calls == b.oracle_calls


def _calls_to_eps(fn, oracle, v, cfg, u_star, H, eps):
    hit = []
    fn(oracle, v, cfg, callback=lambda t, u, c: hit.append(c) if not hit and ihvp.h_norm_sq_error(u, u_star, H) <= eps else None)
    return hit[0] if hit else math.inf


def test_accel_well_conditioned_within_2x_of_svrg(logistic_instance):
    oracle, v, H, u_star = logistic_instance
    eps = 1e-10
    s = _calls_to_eps(ihvp.solve_svrg, fresh(oracle), v, SolverConfig("svrg", epochs=60), u_star, H, eps)
    a = _calls_to_eps(ihvp.solve_accel_svrg, fresh(oracle), v, SolverConfig("accel_svrg", epochs=60), u_star, H, eps)
    assert a <= 2 * s < math.inf


def _ill_conditioned(n, kappa, p=10, seed=11):
    X = synthdata.design_with_spectrum(synthdata.SpectrumSpec("poly", p, 3.0), n, seed).X
    base = HvpOracle(X=X, curv=np.ones(n))
    L0 = base.smoothness()
    mu0 = linalg.sym_eigen(base.dense()).eigenvalues[-1]
    lam = (L0 - kappa * mu0) / (kappa - 1)
    assert lam > 0
    return base.with_shift(lam)


def test_accel_beats_svrg_when_kappa_is_100n():
    n = 10
    oracle = _ill_conditioned(n, 100 * n)
    H = oracle.dense()
    v = rng.normal(3, H.shape[0])
    u_star = ihvp.solve_exact(H, v).u
    eps = 1e-6 * float(u_star @ H @ u_star)
    s = _calls_to_eps(ihvp.solve_svrg, fresh(oracle), v, SolverConfig("svrg", epochs=5000), u_star, H, eps)
    a = _calls_to_eps(ihvp.solve_accel_svrg, fresh(oracle), v, SolverConfig("accel_svrg", epochs=5000), u_star, H, eps)
    assert a < s < math.inf


# ---------------------------------------------------------------- Arnoldi / low rank


def test_arnoldi_breakdown_on_diagonal():
    H = np.diag([5.0, 3.0, 1.0])
    fact = ihvp.arnoldi_factorize(HvpOracle.from_matrix(H, 2), np.array([1.0, 0, 0]), 3, 1)
    assert fact.breakdown and fact.krylov_dim == 1
    assert fact.eigenvalues[0] == 5.0


def test_arnoldi_full_matches_eigen(nprng):
    H = random_spd(nprng, 12, cond=30)
    fact = ihvp.arnoldi_factorize(HvpOracle.from_matrix(H, 2), nprng.standard_normal(12), 12, 4)
    assert np.allclose(fact.eigenvalues, np.linalg.eigvalsh(H)[::-1][:4], atol=1e-8)
    assert fact.oracle_calls == 24


def test_arnoldi_constructed_spectrum(nprng):
    lam = np.array([10.0, 5.0] + [1.0 - 0.05 * i for i in range(8)])
    Q, _ = np.linalg.qr(nprng.standard_normal((10, 10)))
    H = (Q * lam) @ Q.T
    for T in (6, 8, 10):
        fact = ihvp.arnoldi_factorize(HvpOracle.from_matrix(H, 1), nprng.standard_normal(10), T, 2)
        assert np.allclose(fact.eigenvalues, [10.0, 5.0], atol=1e-6)


def test_lowrank_full_rank_equals_exact(logistic_instance):
    oracle, v, H, u_star = logistic_instance
    sol = ihvp.solve_arnoldi(fresh(oracle), v, SolverConfig("arnoldi"))
    assert ihvp.h_norm_sq_error(sol.u, u_star, H) <= 1e-7
    assert sol.oracle_calls == oracle.n * v.size


def test_lowrank_2x2_case():
    H = np.diag([4.0, 1.0])
    fact = ihvp.arnoldi_factorize(HvpOracle.from_matrix(H, 1), np.array([1.0, 1.0]), 2, 1)
    v = np.array([0.0, 1.0])
    u = ihvp.solve_lowrank(fact, v)
    assert np.allclose(u, 0.0, atol=1e-15)
    u_star = ihvp.solve_exact(H, v).u
    assert np.sum((u - u_star) ** 2) <= np.sum(u_star**2) * 1.0 + 1e-15
    assert ihvp.solve_lowrank(fact, v, grad_h=np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)


def test_lowrank_tail_bound_random(nprng):
    for _ in range(5):
        p = 15
        H = random_spd(nprng, p, cond=1e3)
        v = nprng.standard_normal(p)
        u_star = ihvp.solve_exact(H, v).u
        lam = np.linalg.eigvalsh(H)[::-1]
        for k in range(1, p + 1):
            fact = ihvp.arnoldi_factorize(HvpOracle.from_matrix(H, 1), nprng.standard_normal(p), p, k)
            u = ihvp.solve_lowrank(fact, v)
            assert ihvp.h_norm_sq_error(u, u_star, H) <= np.sum(u_star**2) * lam[k:].sum() * (1 + 1e-8) + 1e-12


def test_nonpositive_ritz_value():
    fact = ihvp.arnoldi_factorize(HvpOracle.from_matrix(np.diag([1.0, -1.0]), 1), np.array([1.0, 1.0]), 2, 2)
    with pytest.raises(NonpositiveRitzValue):
        ihvp.solve_lowrank(fact, np.ones(2))


# ---------------------------------------------------------------- accounting, determinism


ACCOUNTED = [
    SolverConfig("cg", max_iters=4, cg_stop=0.0),
    SolverConfig("sgd", max_iters=777),
    SolverConfig("lissa", max_iters=100, repeats=3),
    SolverConfig("svrg", epochs=3, epoch_len=50),
    SolverConfig("accel_svrg", epochs=2, epoch_len=40, catalyst_mu=0.1),
    SolverConfig("arnoldi", krylov_dim=6, rank=3),
    SolverConfig("exact"),
]


@pytest.mark.parametrize("cfg", ACCOUNTED, ids=lambda c: c.method)
def test_oracle_accounting(cfg, logistic_instance):
    oracle, v, _, _ = logistic_instance
    o = fresh(oracle)
    sol = ihvp.solve(o, v, cfg)
    expect = cfg.max_iters * o.n if cfg.method == "cg" else ihvp.declared_calls(cfg, o.n, v.size)
    assert sol.oracle_calls == o.calls == expect


@pytest.mark.parametrize("cfg", ACCOUNTED, ids=lambda c: c.method)
def test_replay_bitwise(cfg, logistic_instance):
    oracle, v, _, _ = logistic_instance
    a = ihvp.solve(fresh(oracle), v, cfg)
    b = ihvp.solve(fresh(oracle), v, cfg)
    assert np.array_equal(a.u, b.u) and a.oracle_calls == b.oracle_calls


def test_damping_is_applied(logistic_instance):
    oracle, v, H, _ = logistic_instance
    sol = ihvp.solve(fresh(oracle), v, SolverConfig("cg", damping=0.3))
    assert np.allclose(sol.u, ihvp.solve_exact(H, v, damping=0.3).u, atol=1e-10)


# ---------------------------------------------------------------- theory helpers


def test_predict_cost_examples():
    assert ihvp.predict_cost("cg", 16, math.e, 0.0, 100, 1.0) == pytest.approx(400.0)
    n, kappa, ratio = 50, 50.0, 7.0
    assert ihvp.predict_cost("svrg", kappa, ratio, 0.0, n, 1.0) == pytest.approx(2 * n * math.log(kappa * ratio))
    # log(kappa Delta / eps) vanishes at eps = kappa Delta
    assert ihvp.predict_cost("svrg", 20.0, 1.0, 0.0, 10, 20.0) == 0.0
    assert ihvp.predict_cost("sgd", 4.0, 1.0, 3.0, 10, 0.5) == pytest.approx(6.0 + 4 * math.log(8.0))
    assert ihvp.predict_cost("accel_svrg", 100.0, 1.0, 0.0, 25, 0.01) == pytest.approx(75 * math.log(1e4))
    assert ihvp.predict_cost("lowrank", 10.0, 1.0, 0.0, 5, 0.1, ("poly", 2.0)) == pytest.approx(500.0)
    assert ihvp.predict_cost("lowrank", 10.0, 1.0, 0.0, 5, 0.1, ("exp", 0.5)) == pytest.approx(10 * math.log(100))
    with pytest.raises(UnsupportedDecay):
        ihvp.predict_cost("lowrank", 10.0, 1.0, 0.0, 5, 0.1)


def test_sigma2_identical_hessians_zero():
    H = np.diag([2.0, 1.0])
    o = HvpOracle.from_matrix(H, 5)
    assert ihvp.sgd_noise_sigma2(o, H, np.array([1.0, -1.0])) == pytest.approx(0.0, abs=1e-24)


def test_sigma2_hand_built_2x2():
    H1, H2 = np.diag([1.0, 3.0]), np.diag([3.0, 1.0])
    H = (H1 + H2) / 2  # 2 I
    I = np.array([1.0, 2.0])
    # b_i = H^{-1/2}(H_i - H) I
    b1 = (H1 - H) @ I / math.sqrt(2)
    b2 = (H2 - H) @ I / math.sqrt(2)
    S = (np.outer(b1, b1) + np.outer(b2, b2)) / 2
    expect = np.trace(S) + 2 * np.linalg.eigvalsh(S).max()
    o = HvpOracle(stack=np.stack([H1, H2]))
    assert ihvp.sgd_noise_sigma2(o, H, I) == pytest.approx(expect, rel=1e-12)
    assert ihvp.sgd_noise_sigma2(HvpOracle(stack=np.stack([H1, H2])), H, 2 * I) == pytest.approx(4 * expect, rel=1e-12)


def test_select_damping():
    good = HvpOracle.from_matrix(np.diag([1.0, 0.5]), 4)
    assert ihvp.select_damping(good, np.ones(2)) == 0.0
    indef = HvpOracle.from_matrix(np.diag([1.0, -0.05]), 4)
    lam = ihvp.select_damping(indef, np.array([0.0, 1.0]))
    assert lam >= 0.05 and lam in ihvp.DAMPING_GRID


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_all_deterministic_solvers_agree(p, seed):
    g = np.random.default_rng(seed)
    H = random_spd(g, p, cond=20)
    v = g.standard_normal(p)
    u_star = ihvp.solve_exact(H, v).u
    for cfg in (SolverConfig("cg", cg_stop=1e-13), SolverConfig("arnoldi", seed=seed)):
        u = ihvp.solve(HvpOracle.from_matrix(H, 2), v, cfg).u
        assert ihvp.h_norm_sq_error(u, u_star, H) <= 1e-12 * max(1.0, float(u_star @ H @ u_star))
