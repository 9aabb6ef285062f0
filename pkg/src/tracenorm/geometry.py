"""Quotient geometry of fixed-rank matrices ``X = U B V^T``.

The total space is ``St(p, n) x S++(p) x St(p, m)``; points related by
``(U O, O^T B O, V O)`` for orthogonal ``O`` represent the same matrix.
All operations cost ``O(n p^2 + m p^2 + p^3)`` and never form ``U B V^T``.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    TOL_ORTH,
    DimensionError,
    is_spd,
    polar_factor,
    skew,
    solve_skew_lyapunov,
    spd_function,
    sym,
)

DEBUG = bool(os.environ.get("TRACENORM_DEBUG"))


@dataclass(frozen=True, eq=False)
class FixedRankPoint:
    """A point ``(U, B, V)`` of the total space.

    Spectral data of `B` (eigendecomposition, inverse and square roots) are
    computed once at construction; instances are immutable afterwards.
    Rank zero is allowed and represents the zero matrix.
    """

    U: np.ndarray
    B: np.ndarray
    V: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        B = np.asarray(self.B, dtype=float)
        p = B.shape[0]
        if U.ndim != 2 or V.ndim != 2 or B.shape != (p, p) or U.shape[1] != p or V.shape[1] != p:
            raise DimensionError(
                f"inconsistent factor shapes U{U.shape} B{B.shape} V{V.shape}"
            )
        B = sym(B) if p else B
        if self.check and p:
            eye = np.eye(p)
            if np.linalg.norm(U.T @ U - eye) > TOL_ORTH * max(1.0, p):
                raise ValueError("U does not have orthonormal columns")
            if np.linalg.norm(V.T @ V - eye) > TOL_ORTH * max(1.0, p):
                raise ValueError("V does not have orthonormal columns")
            if not is_spd(B):
                raise ValueError("B is not symmetric positive definite")
        w, Q = np.linalg.eigh(B) if p else (np.zeros(0), np.zeros((0, 0)))
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "eig", (w, Q))
        object.__setattr__(self, "B_inv", (Q / w) @ Q.T if p else B.copy())
        object.__setattr__(self, "B_sqrt", (Q * np.sqrt(w)) @ Q.T if p else B.copy())
        object.__setattr__(self, "B_isqrt", (Q / np.sqrt(w)) @ Q.T if p else B.copy())

    @property
    def rank(self):
        return self.B.shape[0]

    @property
    def shape(self):
        return self.U.shape[0], self.V.shape[0]

    def trace_norm(self):
        return float(np.trace(self.B))

    def to_dense(self):
        return (self.U @ self.B) @ self.V.T

    def rotate(self, O):
        """Representative ``(U O, O^T B O, V O)`` of the same equivalence class."""
        return FixedRankPoint(self.U @ O, O.T @ self.B @ O, self.V @ O)

    @classmethod
    def zero(cls, n, m):
        return cls(np.zeros((n, 0)), np.zeros((0, 0)), np.zeros((m, 0)))

    @classmethod
    def from_dense(cls, X, rank=None, tol=1e-12):
        """Truncated-SVD factorization of a dense matrix."""
        P, s, Qt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
        if rank is None:
            rank = int(np.sum(s > tol * max(s[0] if s.size else 0.0, np.finfo(float).tiny)))
        return cls(P[:, :rank], np.diag(s[:rank]), Qt[:rank].T)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Matrix triple ``(Z_U, Z_B, Z_V)`` in the tangent space of the total space.

    ``horizontal`` records that the vector was produced by (or is a linear
    combination of outputs of) the horizontal projection.
    """

    U: np.ndarray
    B: np.ndarray
    V: np.ndarray
    horizontal: bool = False

    def __add__(self, other):
        return TangentVector(self.U + other.U, self.B + other.B, self.V + other.V,
                             self.horizontal and other.horizontal)

    def __sub__(self, other):
        return TangentVector(self.U - other.U, self.B - other.B, self.V - other.V,
                             self.horizontal and other.horizontal)

    def __mul__(self, a):
        return TangentVector(a * self.U, a * self.B, a * self.V, self.horizontal)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def fro_norm(self):
        return float(np.sqrt(np.sum(self.U**2) + np.sum(self.B**2) + np.sum(self.V**2)))

    @classmethod
    def zeros_like(cls, x, horizontal=True):
        return cls(np.zeros_like(x.U), np.zeros_like(x.B), np.zeros_like(x.V), horizontal)


def _check_dims(x, Z):
    if Z.U.shape != x.U.shape or Z.B.shape != x.B.shape or Z.V.shape != x.V.shape:
        raise DimensionError("tangent triple does not match the point's shapes")


def metric(x, xi, eta):
    """Inner product ``tr(xi_U^T eta_U) + tr(B^-1 xi_B B^-1 eta_B) + tr(xi_V^T eta_V)``."""
    Bi = x.B_inv
    return float(
        np.sum(xi.U * eta.U)
        + np.sum((Bi @ xi.B @ Bi) * eta.B.T)
        + np.sum(xi.V * eta.V)
    )


def norm(x, xi):
    return np.sqrt(max(metric(x, xi, xi), 0.0))


def project_tangent(x, Z):
    """Project an ambient triple onto the tangent space of the total space."""
    _check_dims(x, Z)
    U, V = x.U, x.V
    return TangentVector(
        Z.U - U @ sym(U.T @ Z.U),
        sym(Z.B),
        Z.V - V @ sym(V.T @ Z.V),
    )


def vertical_vector(x, Omega):
    """Tangent vector ``(U Om, B Om - Om B, V Om)`` along the equivalence class."""
    return TangentVector(x.U @ Omega, x.B @ Omega - Omega @ x.B, x.V @ Omega)


def horizontal_omega(x, eta):
    """Skew matrix removing the vertical component of a tangent vector."""
    B = x.B
    rhs = B @ (skew(x.U.T @ eta.U) - 2.0 * skew(x.B_inv @ eta.B) + skew(x.V.T @ eta.V)) @ B
    return solve_skew_lyapunov(B, rhs, eig=x.eig, check=False)


def project_horizontal(x, eta):
    """Metric projection of a tangent vector onto the horizontal space."""
    _check_dims(x, eta)
    if x.rank == 0:
        return TangentVector(eta.U, eta.B, eta.V, True)
    Om = horizontal_omega(x, eta)
    return TangentVector(
        eta.U - x.U @ Om,
        eta.B - (x.B @ Om - Om @ x.B),
        eta.V - x.V @ Om,
        True,
    )


def assert_horizontal(x, eta, tol=1e-8):
    """Debug check that the Lyapunov correction of `eta` vanishes."""
    Om = horizontal_omega(x, eta)
    scale = max(1.0, eta.fro_norm())
    if np.linalg.norm(Om) > tol * scale:
        raise AssertionError(f"vector is not horizontal (|Omega| = {np.linalg.norm(Om):.2e})")


def egrad_to_rgrad(x, G):
    """Riemannian gradient from the Euclidean gradient triple ``G``.

    The Stiefel slots are tangent projections; the middle slot is the
    projected (symmetrized) gradient scaled on both sides by `B`.
    """
    P = project_tangent(x, G)
    return TangentVector(P.U, x.B @ P.B @ x.B, P.V, True)


def apply_hessian(x, xi, egrad, ehess):
    """Riemannian Hessian applied to a horizontal vector.

    Parameters
    ----------
    x : FixedRankPoint
    xi : TangentVector
        Horizontal direction.
    egrad : TangentVector
        Euclidean gradient triple ``(G_U, G_B, G_V)`` at `x`.
    ehess : TangentVector
        Directional derivative of the Euclidean gradient triple along `xi`.

    Notes
    -----
    The directional derivative of the Riemannian gradient field is
    assembled from `egrad` and `ehess`, corrected by the connection terms
    of the total space and projected horizontally.
    """
    if DEBUG and x.rank:
        assert_horizontal(x, xi)
    U, B, V = x.U, x.B, x.V
    GB = sym(egrad.B)
    g = egrad_to_rgrad(x, egrad)
    # derivative of the Riemannian gradient field along xi
    dU = ehess.U - xi.U @ sym(U.T @ egrad.U) - U @ sym(xi.U.T @ egrad.U + U.T @ ehess.U)
    dV = ehess.V - xi.V @ sym(V.T @ egrad.V) - V @ sym(xi.V.T @ egrad.V + V.T @ ehess.V)
    dB = xi.B @ GB @ B + B @ sym(ehess.B) @ B + B @ GB @ xi.B
    D = project_tangent(x, TangentVector(dU, dB, dV))
    corr = project_tangent(x, TangentVector(
        xi.U @ sym(U.T @ g.U),
        sym(xi.B @ x.B_inv @ g.B),
        xi.V @ sym(V.T @ g.V),
    ))
    return project_horizontal(x, D - corr)


def retract(x, xi):
    """Retraction: polar factors for the Stiefel slots, exponential map on S++."""
    _check_dims(x, xi)
    if x.rank == 0:
        return x
    Bs, Bis = x.B_sqrt, x.B_isqrt
    Bn = Bs @ spd_function(Bis @ xi.B @ Bis, np.exp) @ Bs
    return FixedRankPoint(polar_factor(x.U + xi.U), Bn, polar_factor(x.V + xi.V), check=False)


def inverse_retract_approx(x, y):
    """Horizontal estimate of the direction from `x` towards `y`.

    Differences of the Stiefel factors and the SPD logarithm of the scaling
    factors, projected on the tangent then horizontal space at `x`.
    """
    if x.shape != y.shape or x.rank != y.rank:
        raise DimensionError("points must have equal shapes and ranks")
    if x.rank == 0:
        return TangentVector.zeros_like(x)
    Bs, Bis = x.B_sqrt, x.B_isqrt
    LB = Bs @ spd_function(Bis @ y.B @ Bis, np.log) @ Bs
    Z = TangentVector(y.U - x.U, LB, y.V - x.V)
    return project_horizontal(x, project_tangent(x, Z))


def random_point(n, m, p, rng, scale=1e-3):
    """Orthonormalized Gaussian factors with ``B = scale * I``."""
    U = np.linalg.qr(rng.standard_normal((n, p)))[0]
    V = np.linalg.qr(rng.standard_normal((m, p)))[0]
    return FixedRankPoint(U, scale * np.eye(p), V)


def random_tangent(x, rng, horizontal=True):
    Z = TangentVector(
        rng.standard_normal(x.U.shape),
        rng.standard_normal(x.B.shape),
        rng.standard_normal(x.V.shape),
    )
    eta = project_tangent(x, Z)
    return project_horizontal(x, eta) if horizontal else eta
