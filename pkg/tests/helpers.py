"""Shared instance builders and the geometry check suite."""

import numpy as np

from tracenorm import geometry as geo
from tracenorm.linalg import solve_skew_lyapunov
from tracenorm.problems import MatrixCompletion, MultivariateRegression, ObservedEntries, RegressionData
from tracenorm.trustregion import riemannian_gradient, riemannian_hessian


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))


def random_spd_point(n, m, p, rng):
    """Random point with a well-conditioned B of unit scale."""
    U = np.linalg.qr(rng.standard_normal((n, p)))[0]
    V = np.linalg.qr(rng.standard_normal((m, p)))[0]
    A = rng.standard_normal((p, p))
    return geo.FixedRankPoint(U, A @ A.T + p * np.eye(p), V)


def random_completion(n, m, rank, rng, fraction=0.6, ridge=0.0):
    truth = rng.standard_normal((n, rank)) @ rng.standard_normal((m, rank)).T
    mask = rng.random((n, m)) < fraction
    mask[0, 0] = True
    return MatrixCompletion(ObservedEntries.from_dense(truth, mask), ridge=ridge)


def random_regression(n, q, k, rank, rng, noise=0.1, scaled=False, ridge=0.0):
    X = rng.standard_normal((n, q))
    W = rng.standard_normal((q, rank)) @ rng.standard_normal((k, rank)).T
    Y = X @ W + noise * rng.standard_normal((n, k))
    return MultivariateRegression(RegressionData(X, Y), scaled=scaled, ridge=ridge)


def random_case(seed):
    """A small model and a rank-p point on it; alternates completion and regression."""
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(4, 10)), int(rng.integers(3, 8))
    p = int(rng.integers(1, min(n, m, 3) + 1))
    ridge = 0.1 if seed % 3 == 0 else 0.0
    if seed % 2 == 0:
        model = random_completion(n, m, 2, rng, ridge=ridge)
    else:
        model = random_regression(12, n, m, 2, rng, ridge=ridge)
    return model, random_spd_point(n, m, p, rng), rng


def rotate_tangent(xi, O):
    return geo.TangentVector(xi.U @ O, O.T @ xi.B @ O, xi.V @ O, xi.horizontal)


def random_orthogonal(p, rng):
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    return Q * np.sign(np.diag(R))


# each check returns the worst error over the cases it ran


def check_projection_idempotence(seeds):
    worst = 0.0
    for s in seeds:
        _, x, rng = random_case(s)
        Z = geo.TangentVector(*(rng.standard_normal(a.shape) for a in (x.U, x.B, x.V)))
        P1 = geo.project_tangent(x, Z)
        P2 = geo.project_tangent(x, P1)
        H1 = geo.project_horizontal(x, P1)
        H2 = geo.project_horizontal(x, H1)
        for a, b in ((P1, P2), (H1, H2)):
            err = (a - b).fro_norm() / max(a.fro_norm(), 1e-300)
            worst = max(worst, err)
    return worst


def check_horizontal_vertical(seeds):
    """Metric products of projected vectors with every vertical basis element."""
    worst = 0.0
    for s in seeds:
        _, x, rng = random_case(s)
        eta = geo.random_tangent(x, rng)
        p = x.rank
        for i in range(p):
            for j in range(i + 1, p):
                Om = np.zeros((p, p))
                Om[i, j], Om[j, i] = 1.0, -1.0
                vert = geo.vertical_vector(x, Om)
                val = abs(geo.metric(x, eta, vert)) / (geo.norm(x, eta) * geo.norm(x, vert))
                worst = max(worst, val)
    return worst


def check_lyapunov_residual(seeds):
    worst = 0.0
    for s in seeds:
        rng = np.random.default_rng(s)
        p = int(rng.integers(1, 7))
        A = rng.standard_normal((p, p))
        B = A @ A.T + 0.1 * np.eye(p)
        C = rng.standard_normal((p, p))
        C = C - C.T
        Om = solve_skew_lyapunov(B, C)
        B2 = B @ B
        R = Om @ B2 + B2 @ Om - C
        scale = max(np.linalg.norm(C), np.linalg.norm(Om @ B2) + np.linalg.norm(B2 @ Om), 1e-300)
        worst = max(worst, np.linalg.norm(R) / scale)
    return worst


def retraction_ratios(x, xi, ts=(1e-2, 1e-3, 1e-4)):
    out = []
    for t in ts:
        y = geo.retract(x, t * xi)
        d = np.sqrt(np.linalg.norm(y.U - x.U - t * xi.U) ** 2
                    + np.linalg.norm(y.B - x.B - t * xi.B) ** 2
                    + np.linalg.norm(y.V - x.V - t * xi.V) ** 2)
        out.append(d / t**2)
    return out


def check_retraction_first_order(seeds):
    """Largest growth of ``||R(t xi) - (x + t xi)|| / t^2`` as t shrinks."""
    worst = 0.0
    for s in seeds:
        _, x, rng = random_case(s)
        xi = geo.random_tangent(x, rng)
        r = retraction_ratios(x, xi)
        # bounded: later ratios never exceed the first by more than a constant
        worst = max(worst, max(r[1:]) / max(r[0], 1e-300))
    return worst


def check_rotation_invariance(seeds):
    worst = 0.0
    for s in seeds:
        _, x, rng = random_case(s)
        O = random_orthogonal(x.rank, rng)
        xo = x.rotate(O)
        xi, eta = geo.random_tangent(x, rng), geo.random_tangent(x, rng)
        xio, etao = rotate_tangent(xi, O), rotate_tangent(eta, O)
        g, go = geo.metric(x, xi, eta), geo.metric(xo, xio, etao)
        worst = max(worst, abs(g - go) / max(abs(g), geo.norm(x, xi) * geo.norm(x, eta)))
        y = geo.retract(x, 0.3 * xi)
        yo = geo.retract(xo, 0.3 * xio)
        worst = max(worst, rel(y.to_dense(), yo.to_dense()))
    return worst


def check_gradient_fd(seeds, t=1e-6, lam=0.3):
    worst = 0.0
    for s in seeds:
        model, x, rng = random_case(s)
        g = riemannian_gradient(model, lam, x)
        eta = geo.random_tangent(x, rng)
        eta = eta * (1.0 / geo.norm(x, eta))
        fp = model.objective(geo.retract(x, t * eta), lam)
        fm = model.objective(geo.retract(x, -t * eta), lam)
        fd = (fp - fm) / (2 * t)
        an = geo.metric(x, g, eta)
        worst = max(worst, abs(fd - an) / max(abs(an), abs(fd), geo.norm(x, g), 1e-300))
    return worst


def check_hessian_symmetry(seeds, lam=0.3):
    worst = 0.0
    for s in seeds:
        model, x, rng = random_case(s)
        H = riemannian_hessian(model, lam, x)
        xi, eta = geo.random_tangent(x, rng), geo.random_tangent(x, rng)
        a, b = geo.metric(x, H(xi), eta), geo.metric(x, xi, H(eta))
        scale = max(abs(a), abs(b), geo.norm(x, H(xi)) * geo.norm(x, eta), 1e-300)
        worst = max(worst, abs(a - b) / scale)
    return worst


def check_hessian_fd(seeds, t=1e-4, lam=0.3):
    worst = 0.0
    for s in seeds:
        model, x, rng = random_case(s)
        H = riemannian_hessian(model, lam, x)
        xi = geo.random_tangent(x, rng)
        xi = xi * (1.0 / geo.norm(x, xi))
        f0 = model.objective(x, lam)
        fp = model.objective(geo.retract(x, t * xi), lam)
        fm = model.objective(geo.retract(x, -t * xi), lam)
        fd = (fp - 2 * f0 + fm) / t**2
        an = geo.metric(x, H(xi), xi)
        scale = max(abs(an), abs(fd), geo.norm(x, H(xi)), 1e-300)
        worst = max(worst, abs(fd - an) / scale)
    return worst


GEOMETRY_CHECKS = {
    "tangent and horizontal projection idempotence": (check_projection_idempotence, 1e-12),
    "horizontal-vertical orthogonality": (check_horizontal_vertical, 1e-10),
    "Lyapunov residual": (check_lyapunov_residual, 1e-12),
    "retraction first-order ratio growth": (check_retraction_first_order, 10.0),
    "rotation invariance of metric and retraction": (check_rotation_invariance, 1e-10),
    "gradient vs finite differences": (check_gradient_fd, 1e-5),
    "Hessian symmetry": (check_hessian_symmetry, 1e-8),
    "Hessian vs second finite differences": (check_hessian_fd, 1e-4),
}
