"""Dense proximal-gradient reference solver for small instances.

Plain ISTA with singular value soft-thresholding. Independent of the
manifold code: it only touches a model through its dense loss and
gradient, and computes its own duality gap from a full SVD.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OracleConfig:
    step: float = None  # 1 / L_f when left unset
    max_iter: int = 200000
    tol: float = 1e-12
    gap_tol: float = 1e-10

    def __post_init__(self):
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")
        if self.max_iter < 1 or self.tol <= 0:
            raise ValueError("max_iter and tol must be positive")


@dataclass
class OracleResult:
    X: np.ndarray
    objective: float
    rel_gap: float
    iterations: int
    converged: bool
    objectives: list = field(default_factory=list, repr=False)

    def rank(self, rtol=1e-8):
        s = np.linalg.svd(self.X, compute_uv=False)
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > rtol * s[0]))


def singular_value_soft_threshold(X, tau):
    """Proximal map of ``tau * ||.||_*``: shrink every singular value by `tau`."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    X = np.asarray(X, dtype=float)
    P, s, Qt = np.linalg.svd(X, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (P * s) @ Qt


def dense_relative_gap(model, X, lam):
    """Relative duality gap at a dense matrix, from a full SVD of the gradient.

    Uses the same scaled dual candidate as the factored certificate so the
    two are comparable, but no factored code.
    """
    G = model.dense_gradient(X)
    sigma = np.linalg.norm(G, 2) if G.size else 0.0
    theta = 1.0 if sigma <= lam else lam / sigma
    conj = model.dense_data_conjugate(X, theta)
    if model.ridge:
        conj += theta**2 * model.ridge * float(np.sum(X**2))
    gap = model.dense_objective(X, lam) + conj
    return gap / abs(conj) if conj != 0 else (0.0 if gap <= 0 else np.inf)


def solve_convex_dense(model, lam, cfg=None, X0=None):
    """Minimize ``f(X) + lam ||X||_*`` by proximal gradient on the dense matrix.

    Stops when the relative objective change falls below ``cfg.tol`` or the
    relative duality gap below ``cfg.gap_tol`` (checked every 50 steps).

    Returns
    -------
    OracleResult
        ``converged`` is False when ``max_iter`` was reached first.
    """
    cfg = cfg or OracleConfig()
    step = cfg.step if cfg.step is not None else 1.0 / model.lipschitz()
    X = np.zeros(model.shape) if X0 is None else np.array(X0, dtype=float)
    phi = model.dense_objective(X, lam)
    history = [phi]
    converged = False
    k = 0
    for k in range(1, cfg.max_iter + 1):
        X = singular_value_soft_threshold(X - step * model.dense_gradient(X), step * lam)
        phi_new = model.dense_objective(X, lam)
        history.append(phi_new)
        small_change = abs(phi - phi_new) <= cfg.tol * max(abs(phi_new), 1e-300)
        phi = phi_new
        if small_change or k % 50 == 0:
            if dense_relative_gap(model, X, lam) <= cfg.gap_tol:
                converged = True
                break
            if small_change and phi_new == history[-2]:
                # no further progress possible in floating point
                converged = True
                break
    return OracleResult(X, phi, dense_relative_gap(model, X, lam), k, converged, history)
