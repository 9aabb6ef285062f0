import numpy as np
import pytest

from helpers import GEOMETRY_CHECKS, random_case, random_spd_point, retraction_ratios
from tracenorm import geometry as geo
from tracenorm.linalg import DimensionError


@pytest.mark.parametrize("name", list(GEOMETRY_CHECKS))
def test_geometry_property(name):
    fn, tol = GEOMETRY_CHECKS[name]
    assert fn(range(25)) <= tol


def test_metric_matches_three_trace_formula():
    rng = np.random.default_rng(0)
    x = random_spd_point(4, 3, 2, rng)
    xi, eta = geo.random_tangent(x, rng, False), geo.random_tangent(x, rng, False)
    Bi = np.linalg.inv(x.B)
    expected = (np.trace(xi.U.T @ eta.U) + np.trace(Bi @ xi.B @ Bi @ eta.B)
                + np.trace(xi.V.T @ eta.V))
    assert geo.metric(x, xi, eta) == pytest.approx(expected, rel=1e-13)


def test_point_validation():
    with pytest.raises(ValueError):
        geo.FixedRankPoint(np.ones((3, 1)), np.eye(1), np.eye(2)[:, :1])
    with pytest.raises(ValueError):
        geo.FixedRankPoint(np.eye(3)[:, :1], -np.eye(1), np.eye(2)[:, :1])
    with pytest.raises(DimensionError):
        geo.FixedRankPoint(np.eye(3)[:, :2], np.eye(1), np.eye(2)[:, :1])


def test_zero_point_and_from_dense():
    z = geo.FixedRankPoint.zero(4, 3)
    assert z.rank == 0 and z.trace_norm() == 0.0
    np.testing.assert_array_equal(z.to_dense(), np.zeros((4, 3)))
    A = np.random.default_rng(1).standard_normal((5, 2)) @ np.random.default_rng(2).standard_normal((2, 4))
    x = geo.FixedRankPoint.from_dense(A)
    assert x.rank == 2
    np.testing.assert_allclose(x.to_dense(), A, atol=1e-12)


def test_retraction_stays_on_manifold():
    _, x, rng = random_case(4)
    y = geo.retract(x, geo.random_tangent(x, rng) * 0.7)
    p = x.rank
    np.testing.assert_allclose(y.U.T @ y.U, np.eye(p), atol=1e-13)
    np.testing.assert_allclose(y.V.T @ y.V, np.eye(p), atol=1e-13)
    assert np.all(np.linalg.eigvalsh(y.B) > 0)


def test_retraction_ratio_bounded_explicitly():
    _, x, rng = random_case(5)
    r = retraction_ratios(x, geo.random_tangent(x, rng))
    assert max(r) < 10 * r[0] + 1e-12


def test_inverse_retraction_round_trip_second_order():
    _, x, rng = random_case(6)
    xi = geo.random_tangent(x, rng)
    xi = xi * (1.0 / geo.norm(x, xi))
    errs = []
    for t in (1e-2, 1e-3):
        back = geo.inverse_retract_approx(x, geo.retract(x, t * xi))
        errs.append(geo.norm(x, back - t * xi) / t**2)
    assert errs[1] < 10 * errs[0] + 1e-6


def test_horizontal_projection_removes_vertical_component():
    _, x, rng = random_case(8)
    p = x.rank
    Om = rng.standard_normal((p, p))
    Om = Om - Om.T
    vert = geo.vertical_vector(x, Om)
    assert geo.project_horizontal(x, vert).fro_norm() <= 1e-12 * max(1.0, vert.fro_norm())


def test_dimension_mismatch():
    _, x, _ = random_case(2)
    bad = geo.TangentVector(np.zeros((1, 1)), x.B, x.V)
    with pytest.raises(DimensionError):
        geo.project_tangent(x, bad)
