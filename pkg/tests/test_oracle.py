import itertools

import numpy as np
import pytest

from helpers import random_completion
from tracenorm.oracle import (
    OracleConfig,
    dense_relative_gap,
    singular_value_soft_threshold,
    solve_convex_dense,
)
from tracenorm.problems import MatrixCompletion, ObservedEntries


def test_svt_examples():
    D = np.diag([3.0, 1.0])
    np.testing.assert_allclose(singular_value_soft_threshold(D, 2.0), np.diag([1.0, 0.0]), atol=1e-15)
    np.testing.assert_allclose(singular_value_soft_threshold(D, 5.0), 0.0, atol=1e-15)
    np.testing.assert_allclose(singular_value_soft_threshold(D, 0.0), D, atol=1e-15)
    with pytest.raises(ValueError):
        singular_value_soft_threshold(D, -1.0)


def test_svt_is_the_proximal_map_on_a_grid():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 2))
    tau = 0.4

    def obj(X):
        return 0.5 * np.sum((X - A) ** 2) + tau * np.sum(np.linalg.svd(X, compute_uv=False))

    P = singular_value_soft_threshold(A, tau)
    best = obj(P)
    for d in itertools.product((-0.05, 0.0, 0.05), repeat=4):
        assert obj(P + np.reshape(d, (2, 2))) >= best - 1e-12


def test_objective_monotone_and_gap_small():
    rng = np.random.default_rng(1)
    model = random_completion(8, 6, 2, rng, fraction=0.8, ridge=0.05)
    res = solve_convex_dense(model, 0.1)
    h = np.asarray(res.objectives)
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[1:]))
    assert res.converged and res.rel_gap <= 1e-6
    assert dense_relative_gap(model, res.X, 0.1) == pytest.approx(res.rel_gap)


def test_exact_recovery_fully_observed_small_weight():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 8))
    model = MatrixCompletion(ObservedEntries.from_dense(A))
    res = solve_convex_dense(model, 1e-8)
    assert np.linalg.norm(res.X - A) <= 1e-6 * np.linalg.norm(A)
    assert res.rank() == 2


def test_rank_of_zero_and_config_validation():
    model = random_completion(4, 3, 1, np.random.default_rng(3))
    res = solve_convex_dense(model, 10 * model.lambda_max())
    assert res.rank() == 0
    with pytest.raises(ValueError):
        OracleConfig(step=-1.0)
    with pytest.raises(ValueError):
        OracleConfig(max_iter=0)


def test_iteration_cap_reports_not_converged():
    model = random_completion(8, 6, 2, np.random.default_rng(4))
    res = solve_convex_dense(model, 1e-4, OracleConfig(max_iter=3))
    assert not res.converged and res.iterations == 3
