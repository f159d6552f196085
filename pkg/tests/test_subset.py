import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from influence_lab import glm, mestim, subset, synthdata
from influence_lab.errors import EmptyInput
from influence_lab.glm import DataPoint, Dataset

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_superquantile_examples():
    assert subset.superquantile([1, 2, 3, 4], 0.5) == pytest.approx(3.5)
    assert subset.superquantile([5, 1, 3, 2], 0.5) == pytest.approx(4.0)
    assert subset.superquantile([5, 1, 3, 2], 0.0) == pytest.approx(2.75)
    val, eta = subset.superquantile_dual([1, 2, 3, 4], 0.5)
    # the dual is flat on [2, 3]; the smallest breakpoint wins
    assert val == pytest.approx(3.5) and eta == 2.0
    # alpha n rounding to the integer 0 still means the mean
    assert subset.superquantile([0.0, 1.0], 1e-38) == pytest.approx(0.5)


def test_errors():
    with pytest.raises(EmptyInput):
        subset.superquantile([], 0.1)
    with pytest.raises(ValueError):
        subset.superquantile([1.0], 1.0)
    with pytest.raises(ValueError):
        subset.superquantile([1.0], -0.1)


def test_removal_count_rounding():
    assert subset.removal_count(10, 0.3) == (3, True)  # 0.3 * 10 = 3.0000000000000004
    assert subset.removal_count(10, 0.25) == (2, False)
    assert subset.removal_count(7, 0.0) == (0, True)


def _brute_force(v, alpha):
    n = v.size
    m = n - subset.removal_count(n, alpha)[0]
    return max(np.mean(v[list(c)]) for c in itertools.combinations(range(n), m))


@given(st.lists(finite, min_size=1, max_size=12), st.integers(0, 11))
def test_three_routes_and_brute_force(vals, k):
    v = np.array(vals)
    assume(k < v.size)
    alpha = k / v.size
    s = subset.superquantile(v, alpha)
    d, _ = subset.superquantile_dual(v, alpha)
    g = subset.most_influential_subset(v, alpha).greedy_value
    tol = 1e-9 * max(1.0, np.max(np.abs(v)))
    assert abs(s - d) <= tol and abs(s - g) <= tol
    assert abs(s - _brute_force(v, alpha)) <= tol


@given(st.lists(finite, min_size=2, max_size=30), st.floats(0.0, 0.95))
def test_fractional_alpha_routes_agree(vals, alpha):
    v = np.array(vals)
    s = subset.superquantile(v, alpha)
    d, _ = subset.superquantile_dual(v, alpha)
    rep = subset.most_influential_subset(v, alpha)
    tol = 1e-9 * max(1.0, np.max(np.abs(v)))
    assert abs(s - d) <= tol and abs(s - rep.greedy_value) <= tol


@given(st.lists(finite, min_size=1, max_size=30), st.floats(0.0, 0.9), st.floats(0.0, 0.09))
def test_monotone_in_alpha(vals, alpha, step):
    v = np.array(vals)
    tol = 1e-9 * max(1.0, np.max(np.abs(v)))
    assert subset.superquantile(v, alpha + step) >= subset.superquantile(v, alpha) - tol
    assert subset.superquantile(v, alpha) >= np.mean(v) - tol
    assert subset.superquantile(v, alpha) <= np.max(v) + tol


@given(st.lists(finite, min_size=1, max_size=30), st.floats(0.0, 0.9), st.floats(0.01, 10), finite)
def test_equivariance(vals, alpha, a, b):
    v = np.array(vals)
    lhs = subset.superquantile(a * v + b, alpha)
    rhs = a * subset.superquantile(v, alpha) + b
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs), a * np.max(np.abs(v)), abs(b))


@given(st.lists(finite, min_size=1, max_size=30), st.floats(0.0, 0.9))
def test_permutation_invariance(vals, alpha):
    v = np.array(vals)
    p = np.random.default_rng(0).permutation(v.size)
    assert subset.superquantile(v[p], alpha) == pytest.approx(subset.superquantile(v, alpha), rel=1e-12, abs=1e-12)


def test_non_integer_alpha_fractional_weight():
    v = np.array([4.0, -1.0, 2.0, 0.5])
    rep = subset.most_influential_subset(v, 0.3)  # alpha n = 1.2
    assert rep.removed_indices == (1,)
    j, w = rep.fractional_index
    cap = 1 / (0.7 * 4)
    assert j == 3 and w == pytest.approx(1 - 2 * cap)
    assert rep.sif_value == pytest.approx(cap * (4 + 2) + w * 0.5)


def test_ties_remove_lower_index_first():
    rep = subset.most_influential_subset([1.0, 0.0, 0.0, 0.0, 2.0], 0.4)
    assert rep.removed_indices == (1, 2)


def _per_point_oracle(model, d, fit, z):
    H = mestim.batch_hessian(model, d, fit.theta)
    gh = model.grad(z, fit.theta)
    return np.array([-gh @ np.linalg.solve(H, model.grad(d.point(i), fit.theta)) for i in range(d.n)])


def test_sif_scores_small_oracle():
    d = Dataset(np.array([[1.0, 0.5], [-0.3, 1.0], [0.7, -1.2]]), np.array([1.0, -1.0, -1.0]), "logistic")
    model = glm.logistic(0.1)
    fit = mestim.fit(model, d)
    z = DataPoint(np.array([2.0, 1.0]), -1.0)
    assert np.allclose(subset.sif_scores(model, d, fit, z), _per_point_oracle(model, d, fit, z), atol=1e-13)


def test_sif_scores_duplicates_and_zero_gradient():
    base = synthdata.simulate(synthdata.SimSpec("linear", 20, p=3, seed=1))
    d = base.take(list(range(20)) + [4])
    model = glm.least_squares(0.01)
    fit = mestim.fit(model, d)
    s = subset.sif_scores(model, d, fit, synthdata.outlier_point(synthdata.SimSpec("linear", 20, p=3)))
    assert s[4] == s[20]
    assert np.array_equal(subset.sif_scores(model, d, fit, grad_h=np.zeros(3)), np.zeros(21))
    with pytest.raises(ValueError):
        subset.sif_scores(model, d, fit)


def test_sif_scores_sum_to_zero_at_optimum():
    # unregularized: mean gradient vanishes, so scores average to zero and alpha = 0 gives 0
    d = synthdata.simulate(synthdata.SimSpec("logistic", 80, p=3, seed=2))
    model = glm.logistic()
    fit = mestim.fit(model, d)
    s = subset.sif_scores(model, d, fit, d.point(0))
    assert abs(subset.most_influential_subset(s, 0.0).sif_value) <= 1e-10


def test_theorem2_scaling():
    base = subset.theorem2_bound(1.0, 1.0, 5.0, 10, 0.0, 100)
    assert base == pytest.approx(5 / 100 * math.log(100 / 0.05))
    assert subset.theorem2_bound(1.0, 1.0, 5.0, 10, 0.5, 100) == pytest.approx(4 * base)
    assert subset.theorem2_bound(2.0, 1.0, 5.0, 10, 0.0, 100) == pytest.approx(4 * base)
    assert subset.theorem2_bound(1.0, 1.0, 5.0, 200, 0.0, 100) == pytest.approx(5 / 100 * math.log(200 / 0.05))
    with pytest.raises(ValueError):
        subset.theorem2_bound(1.0, 1.0, 5.0, 10, 1.0, 100)
