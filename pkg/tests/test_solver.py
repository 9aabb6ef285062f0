import numpy as np
import pytest

from helpers import random_completion, random_regression, random_spd_point
from tracenorm import geometry as geo
from tracenorm.oracle import solve_convex_dense
from tracenorm.problems import MatrixCompletion, ObservedEntries
from tracenorm.solver import (
    DegenerateUpdateError,
    SolverConfig,
    check_certificate,
    embed_rank_increment,
    minimize,
    rank_one_update,
)


def test_embedding_orthogonal_update_is_block_diagonal():
    x = geo.FixedRankPoint(np.eye(4)[:, :1], np.array([[2.0]]), np.eye(3)[:, :1])
    u, v = np.eye(4)[:, 2], np.eye(3)[:, 1]
    beta = 5.0
    y = embed_rank_increment(x, beta, u, v)
    assert y.rank == 2
    np.testing.assert_allclose(np.diag(y.B), [5.0, 2.0], atol=1e-14)
    np.testing.assert_allclose(y.to_dense(), x.to_dense() - beta * np.outer(u, v), atol=1e-14)


def test_embedding_reconstruction_random():
    rng = np.random.default_rng(0)
    x = random_spd_point(7, 6, 2, rng)
    u, v = rng.standard_normal(7), rng.standard_normal(6)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    beta = 0.7
    y = embed_rank_increment(x, beta, u, v)
    err = np.linalg.norm(y.to_dense() - (x.to_dense() - beta * np.outer(u, v)))
    assert err <= 1e-10 * np.linalg.norm(y.B)
    np.testing.assert_allclose(y.U.T @ y.U, np.eye(y.rank), atol=1e-13)


def test_embedding_from_zero():
    x = geo.FixedRankPoint.zero(3, 2)
    u, v = np.array([0.6, 0.8, 0.0]), np.array([0.0, 1.0])
    y = embed_rank_increment(x, 2.0, -u, v)
    np.testing.assert_allclose(y.to_dense(), 2.0 * np.outer(u, v), atol=1e-15)


def test_quadratic_exact_lipschitz_accepts_initial_step():
    # fully observed completion is f = ||X - A||^2 with L_f = 2 exactly
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 4))
    model = MatrixCompletion(ObservedEntries.from_dense(A))
    lam = 0.5
    cfg = SolverConfig()
    x0 = geo.FixedRankPoint.zero(5, 4)
    cert = check_certificate(x0, model, lam, cfg)
    x1, info = rank_one_update(x0, model, lam, model.lipschitz(), cfg, cert)
    excess = cert.sigma - lam
    beta = excess / 2.0
    assert info.backtracks == 0 and info.beta == pytest.approx(beta)
    decrease = info.phi_before - info.phi_after
    assert decrease == pytest.approx(beta * (excess - 2.0 * beta / 2), rel=1e-10)
    assert info.satisfies_descent_bound


def test_rank_one_update_refuses_certified_point():
    rng = np.random.default_rng(2)
    model = random_completion(5, 4, 1, rng)
    x0 = geo.FixedRankPoint.zero(5, 4)
    cfg = SolverConfig()
    lam = 2 * model.lambda_max()
    cert = check_certificate(x0, model, lam, cfg)
    assert cert.certified
    with pytest.raises(DegenerateUpdateError):
        rank_one_update(x0, model, lam, 2.0, cfg, cert)


def test_zero_is_optimal_above_lambda_max():
    rng = np.random.default_rng(3)
    model = random_completion(6, 5, 2, rng)
    sol = minimize(model, 1.01 * model.lambda_max())
    assert sol.rank == 0 and sol.certified and not sol.rank_updates


@pytest.mark.parametrize("lam", [1e-3, 1e-1, 1.0])
def test_matches_oracle_on_small_instance(lam):
    rng = np.random.default_rng(4)
    model = random_completion(10, 8, 2, rng, fraction=0.7, ridge=0.05)
    sol = minimize(model, lam)
    orc = solve_convex_dense(model, lam)
    assert sol.certified
    assert abs(sol.objective - orc.objective) <= 1e-6 * abs(orc.objective)
    assert sol.rank == orc.rank()


def test_certificate_holds_at_oracle_optimum():
    rng = np.random.default_rng(5)
    model = random_regression(30, 6, 5, 2, rng)
    lam = 1.0
    orc = solve_convex_dense(model, lam)
    x = geo.FixedRankPoint.from_dense(orc.X, tol=1e-8)
    assert check_certificate(x, model, lam, SolverConfig()).certified


def test_staircase_is_monotone_and_bounded():
    rng = np.random.default_rng(6)
    model = random_completion(30, 25, 4, rng, fraction=0.7)
    sol = minimize(model, 1e-3)
    costs = [h["cost"] for h in sol.history]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert all(u.satisfies_descent_bound for u in sol.rank_updates)
    ranks = [h["rank"] for h in sol.history]
    assert ranks == sorted(ranks)


def test_max_rank_cap_leaves_uncertified():
    rng = np.random.default_rng(7)
    model = random_completion(20, 15, 5, rng, fraction=0.8)
    sol = minimize(model, 1e-4, SolverConfig(max_rank=2))
    assert sol.rank == 2 and not sol.certified


def test_random_init_is_seeded():
    rng = np.random.default_rng(8)
    model = random_completion(10, 8, 2, rng)
    a = minimize(model, 0.1, SolverConfig(init="random", p0=2, seed=3))
    b = minimize(model, 0.1, SolverConfig(init="random", p0=2, seed=3))
    np.testing.assert_array_equal(a.point.to_dense(), b.point.to_dense())
    assert a.certified


def test_trace_events():
    rng = np.random.default_rng(9)
    model = random_completion(8, 6, 2, rng)
    events = []
    minimize(model, 0.1, sink=events.append)
    kinds = {e["event"] for e in events}
    assert {"certificate", "rank_update"} <= kinds


def test_config_and_input_validation():
    with pytest.raises(ValueError):
        SolverConfig(epsilon_sigma=0)
    with pytest.raises(ValueError):
        SolverConfig(init="other")
    model = random_completion(4, 3, 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        minimize(model, 0.0)
    with pytest.raises(ValueError):
        minimize(model, 1.0, x0=geo.FixedRankPoint.zero(3, 3))
