import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catparc import GroupPenaltySpec, fit_multivariate_group_lasso, kkt_check, lambda_schedule
from catparc.group_lasso import (RankDeficientBlockWarning, _block_minimize, _secular_mu,
                                 group_lasso_objective)

from oracles import ols


def _design(rng, N, sizes, r=2, coupling=0.4, active=(0, 1)):
    D = sum(sizes)
    X = rng.normal(size=(N, D))
    X[:, 1:] += coupling * X[:, :-1]
    X = (X - X.mean(0)) / X.std(0)
    groups, start = [], 0
    for s in sizes:
        groups.append(range(start, start + s))
        start += s
    B = np.zeros((D, r))
    for g in active:
        B[list(groups[g])] = rng.normal(size=(sizes[g], r))
    Y = X @ B + rng.normal(size=(N, r))
    return X, Y, groups


def test_lambda_formula_example():
    lam = lambda_schedule([3], 2, 100, A=2.0, C=0.07, n_groups=8)
    assert lam[0] == pytest.approx(0.031422, abs=5e-7)
    assert lam[0] == pytest.approx(0.07 * (math.sqrt(0.06) + math.sqrt(2 * math.log(8) / 100)), rel=1e-14)


def test_lambda_zero_constant_and_sqrt_n_scaling():
    assert np.all(lambda_schedule([2, 3], 2, 100, C=0.0) == 0)
    a = lambda_schedule([2, 3, 4], 3, 100)
    b = lambda_schedule([2, 3, 4], 3, 400)
    assert np.allclose(b, a / 2)
    assert np.allclose(GroupPenaltySpec().lambdas([2, 3, 4], 3, 100), a)


def test_lambda_zero_matches_least_squares(rng):
    X, Y, groups = _design(rng, 300, [3, 2, 4, 1])
    fit = fit_multivariate_group_lasso(Y, X, groups, 0.0, tol=1e-12, max_iter=5000)
    assert fit.converged
    assert np.abs(fit.B - ols(Y, X)).max() < 1e-6


def test_full_shrinkage_gives_zero_and_residual_equals_y(rng):
    X, Y, groups = _design(rng, 200, [2, 3, 2])
    lam = [np.linalg.norm(X[:, list(g)].T @ Y / 200) + 1e-9 for g in groups]
    fit = fit_multivariate_group_lasso(Y, X, groups, lam)
    assert not fit.B.any()
    assert np.array_equal(fit.residuals, Y)
    assert fit.active_groups == frozenset()
    assert kkt_check(fit, Y, X, groups, lam) == 0.0


def _orthonormal_design(rng, N, sizes):
    D = sum(sizes)
    Q, _ = np.linalg.qr(rng.normal(size=(N, D)))
    return Q * math.sqrt(N)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 1.5))
def test_orthonormal_group_soft_threshold(seed, lam):
    rng = np.random.default_rng(seed)
    N = 60
    X = _orthonormal_design(rng, N, [2])
    Y = rng.normal(size=(N, 2))
    U = X.T @ Y / N
    fit = fit_multivariate_group_lasso(Y, X, [range(2)], lam, tol=1e-12)
    expected = max(0.0, 1.0 - lam / np.linalg.norm(U)) * U
    assert np.abs(fit.B - expected).max() < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.0, 0.6))
def test_threshold_exact_on_orthonormal_designs(seed, lam):
    rng = np.random.default_rng(seed)
    N, sizes = 80, [2, 3, 1, 2]
    X = _orthonormal_design(rng, N, sizes)
    Y = rng.normal(size=(N, 3)) * 0.3
    groups = [range(0, 2), range(2, 5), range(5, 6), range(6, 8)]
    fit = fit_multivariate_group_lasso(Y, X, groups, lam, tol=1e-12)
    all_below = all(np.linalg.norm(X[:, list(g)].T @ Y / N) <= lam for g in groups)
    assert (not fit.B.any()) == all_below


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.005, 0.3))
def test_converged_fits_satisfy_kkt(seed, C):
    rng = np.random.default_rng(seed)
    sizes = [3, 2, 4, 1, 3]
    X, Y, groups = _design(rng, 150, sizes)
    lam = lambda_schedule(sizes, 2, 150, C=C)
    fit = fit_multivariate_group_lasso(Y, X, groups, lam, tol=1e-9, max_iter=5000)
    assert fit.converged
    assert kkt_check(fit, Y, X, groups, lam) <= 1e-5
    assert np.allclose(fit.residuals, Y - X @ fit.B, atol=0)


def test_kkt_violation_increases_when_active_block_perturbed(rng):
    sizes = [3, 2, 4]
    X, Y, groups = _design(rng, 200, sizes)
    lam = lambda_schedule(sizes, 2, 200)
    fit = fit_multivariate_group_lasso(Y, X, groups, lam, tol=1e-10)
    base = kkt_check(fit, Y, X, groups, lam)
    g = sorted(fit.active_groups)[0]
    B = fit.B.copy()
    B[list(groups[g])] += 1e-3
    bumped = type(fit)(B, Y - X @ B, fit.active_groups, 0.0, 0, True)
    assert kkt_check(bumped, Y, X, groups, lam) > base


def test_objective_is_monotone_over_sweeps(rng):
    sizes = [3, 2, 4, 2, 3]
    X, Y, groups = _design(rng, 120, sizes, coupling=0.9)
    lam = lambda_schedule(sizes, 2, 120, C=0.05)
    values = []
    B = None
    for _ in range(15):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_multivariate_group_lasso(Y, X, groups, lam, max_iter=1, B0=B)
        values.append(group_lasso_objective(Y, X, fit.B, groups, lam))
        B = fit.B
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert fit.objective_value == pytest.approx(values[-1], rel=1e-10)


def test_group_permutation_permutes_blocks(rng):
    sizes = [2, 3, 1, 2]
    X, Y, groups = _design(rng, 150, sizes)
    lam = lambda_schedule(sizes, 2, 150)
    fit = fit_multivariate_group_lasso(Y, X, groups, lam, tol=1e-12)
    order = [2, 0, 3, 1]
    cols = np.concatenate([list(groups[g]) for g in order])
    new_groups, start = [], 0
    for g in order:
        new_groups.append(range(start, start + sizes[g]))
        start += sizes[g]
    fit2 = fit_multivariate_group_lasso(Y, X[:, cols], new_groups, lam[order], tol=1e-12)
    assert np.abs(fit2.B - fit.B[cols]).max() < 1e-7


def test_rank_deficient_block_warns_and_still_optimal(rng):
    N = 200
    Z = rng.integers(0, 3, size=N)
    ind = np.column_stack([(Z == k).astype(float) for k in range(3)])  # columns sum to 1
    X = np.column_stack([ind, rng.normal(size=(N, 2))])
    X = (X - X.mean(0)) / X.std(0)
    Y = X[:, :1] + rng.normal(size=(N, 1))
    groups = [range(0, 3), range(3, 5)]
    lam = [0.05, 0.05]
    with pytest.warns(RankDeficientBlockWarning):
        fit = fit_multivariate_group_lasso(Y, X, groups, lam, tol=1e-10)
    assert kkt_check(fit, Y, X, groups, lam) <= 1e-6
    # minimum-norm solve: no component along the null direction of the block
    _, s, Vt = np.linalg.svd(X[:, :3], full_matrices=False)
    null = Vt[-1]
    assert abs(null @ fit.B[:3, 0]) < 1e-8


def test_non_convergence_is_flagged(rng):
    X, Y, groups = _design(rng, 100, [3, 3, 3], coupling=0.95)
    with pytest.warns(UserWarning, match="did not converge"):
        fit = fit_multivariate_group_lasso(Y, X, groups, 0.01, tol=1e-14, max_iter=2)
    assert not fit.converged
    assert fit.iterations == 2


def test_groups_must_partition_columns(rng):
    X = rng.normal(size=(10, 3))
    with pytest.raises(ValueError):
        fit_multivariate_group_lasso(X[:, :1], X, [range(2)], 0.1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=6), st.integers(0, 10 ** 6),
       st.floats(0.05, 0.95))
def test_secular_root_solves_equation(h, seed, frac):
    rng = np.random.default_rng(seed)
    h = np.sort(np.asarray(h))[::-1]
    s = rng.uniform(0.0, 1.0, size=h.size)
    s[0] += 1e-3
    cnorm = math.sqrt(s.sum())
    lam = frac * cnorm
    mu = _secular_mu(h, s, lam, cnorm)
    assert mu > 0
    lhs = mu * math.sqrt(float(np.sum(s / (h + mu) ** 2)))
    assert lhs == pytest.approx(lam, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 10 ** 6), st.floats(0.0, 2.0))
def test_block_minimizer_beats_perturbations(d, r, seed, lam):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d + 2, d))
    H = A.T @ A / (d + 2) + 0.05 * np.eye(d)
    c = rng.normal(size=(d, r))
    h, V = np.linalg.eigh(H)
    b = _block_minimize(h[::-1].copy(), V[:, ::-1].copy(), c, lam)

    def f(x):
        return 0.5 * np.sum(x * (H @ x)) - np.sum(x * c) + lam * np.linalg.norm(x)

    base = f(b)
    for _ in range(20):
        assert f(b + 1e-4 * rng.normal(size=b.shape)) >= base - 1e-12
