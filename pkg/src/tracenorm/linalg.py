"""Dense and structured matrix kernels shared by the rest of the package."""

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator, svds

TOL_SYM = 1e-10
TOL_ORTH = 1e-10
TOL_LYAP = 1e-12
TOL_RANK = 1e-12
TRIPLET_TOL = 1e-10


class DimensionError(ValueError):
    pass


class SingularityError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    """Raised when an iterative kernel stops before reaching its tolerance.

    The best iterate found so far is kept on ``best`` so that callers can
    decide to use it anyway.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def _square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def sym(A):
    A = _square(A)
    return 0.5 * (A + A.T)


def skew(A):
    A = _square(A)
    return 0.5 * (A - A.T)


def is_spd(B, tol=TOL_SYM):
    """Check symmetry and positive definiteness via a Cholesky attempt."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        return False
    scale = max(1.0, np.abs(B).max(initial=0.0))
    if np.abs(B - B.T).max(initial=0.0) > tol * scale:
        return False
    try:
        np.linalg.cholesky(sym(B))
    except np.linalg.LinAlgError:
        return False
    return True


def polar_factor(A):
    """Orthonormal factor of the polar decomposition, ``A (A^T A)^{-1/2}``.

    Computed from the thin SVD ``A = P S Q^T`` as ``P Q^T``.

    Raises
    ------
    SingularityError
        If the smallest singular value of `A` is below ``TOL_RANK`` times the
        largest one.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] > A.shape[0]:
        raise DimensionError(f"expected a tall matrix, got shape {A.shape}")
    if A.shape[1] == 0:
        return A.copy()
    P, s, Qt = np.linalg.svd(A, full_matrices=False)
    if s[-1] <= TOL_RANK * max(s[0], np.finfo(float).tiny):
        raise SingularityError("polar factor of a rank-deficient matrix")
    return P @ Qt


def spd_function(B, fn, eig=None):
    """Apply a scalar function to a symmetric matrix through its spectrum.

    Parameters
    ----------
    B : ndarray, shape (p, p)
        Symmetric matrix (only the symmetric part is used).
    fn : callable
        Vectorized map applied to the eigenvalues, e.g. ``np.exp``.
    eig : tuple, optional
        Precomputed ``(w, Q)`` from ``numpy.linalg.eigh``.
    """
    if eig is None:
        w, Q = np.linalg.eigh(sym(B))
    else:
        w, Q = eig
    return (Q * fn(w)) @ Q.T


def solve_skew_lyapunov(B, C, eig=None, check=True):
    """Solve ``Omega B^2 + B^2 Omega = C`` for skew-symmetric ``C``.

    With ``B = Q diag(w) Q^T`` the equation decouples in the eigenbasis of
    ``B^2``: ``Omega~_ij = C~_ij / (w_i^2 + w_j^2)``.
    """
    C = _square(C)
    if check:
        scale = max(1.0, np.abs(C).max(initial=0.0))
        if np.abs(C + C.T).max(initial=0.0) > TOL_SYM * scale:
            raise ValueError("right-hand side is not skew-symmetric")
    if eig is None:
        w, Q = np.linalg.eigh(sym(B))
    else:
        w, Q = eig
    d = w * w
    Ct = Q.T @ C @ Q
    Om = Ct / (d[:, None] + d[None, :])
    Om = Q @ Om @ Q.T
    return 0.5 * (Om - Om.T)


def as_operator(A):
    """Wrap a dense array, sparse matrix or operator as a scipy LinearOperator."""
    if isinstance(A, LinearOperator):
        return A
    if hasattr(A, "as_linear_operator"):
        return A.as_linear_operator()
    return aslinearoperator(A)


def _sign_fix(u, v):
    # first nonzero entry of the left vector nonnegative
    nz = np.flatnonzero(np.abs(u) > 1e-14 * np.abs(u).max(initial=0.0))
    if nz.size and u[nz[0]] < 0:
        return -u, -v
    return u, v


def dominant_singular_triplet(S, tol=TRIPLET_TOL, max_iter=None, v0=None, seed=0):
    """Dominant singular value and vectors by power iteration on ``S^T S``.

    Parameters
    ----------
    S : array_like, sparse matrix or LinearOperator
        Operator of shape (n, m).
    tol : float
        Relative residual target: ``||S^T u - sigma v|| <= tol * sigma``.
        ``S v - sigma u`` vanishes by construction of the iteration.
    max_iter : int, optional
        Defaults to ``10 * max(n, m)``.
    v0 : ndarray, optional
        Start vector; a seeded Gaussian draw is used otherwise.

    Returns
    -------
    sigma : float
    u : ndarray, shape (n,)
    v : ndarray, shape (m,)

    Raises
    ------
    ConvergenceError
        With the best ``(sigma, u, v)`` on ``.best`` when ``max_iter`` is hit.
    """
    op = as_operator(S)
    n, m = op.shape
    if max_iter is None:
        max_iter = 10 * max(n, m)
    if v0 is None or np.linalg.norm(v0) == 0:
        v = np.random.default_rng(seed).standard_normal(m)
    else:
        v = np.asarray(v0, dtype=float).ravel().copy()
    v /= np.linalg.norm(v)

    best = None
    best_res = np.inf
    for _ in range(max_iter):
        u = op.matvec(v).ravel()
        sigma = np.linalg.norm(u)
        if sigma == 0.0:
            # v lies in the null space; zero operator or unlucky start
            if best is None:
                u = np.zeros(n)
                u[0] = 1.0
                best = (0.0, u, v)
            w = op.rmatvec(np.ones(n)).ravel()
            if np.linalg.norm(w) == 0.0:
                return best
            v = w / np.linalg.norm(w)
            continue
        u /= sigma
        w = op.rmatvec(u).ravel()
        res = np.linalg.norm(w - sigma * v)
        if res < best_res:
            best_res = res
            best = (sigma,) + _sign_fix(u, v)
        if res <= tol * sigma:
            return best
        v = w / np.linalg.norm(w)
    raise ConvergenceError(
        f"power iteration stopped at relative residual {best_res / max(best[0], 1e-300):.2e}",
        best=best,
    )


def lanczos_triplet(S, seed=0, dense_limit=40000):
    """Dominant singular triplet by ARPACK, or a dense SVD for small operators.

    Fallback for clustered spectra where power iteration stalls.
    """
    op = as_operator(S)
    n, m = op.shape
    if min(n, m) <= 2 or n * m <= dense_limit:
        A = np.asarray(op.matmat(np.eye(m)))
        P, s, Qt = np.linalg.svd(A, full_matrices=False)
        sigma, u, v = s[0], P[:, 0], Qt[0]
    else:
        rng = np.random.default_rng(seed)
        P, s, Qt = svds(op, k=1, v0=rng.standard_normal(min(n, m)), tol=0, solver="arpack")
        sigma, u, v = s[0], P[:, 0], Qt[0]
    return (float(sigma),) + _sign_fix(u, v)


def small_svd(K):
    """SVD of a small dense matrix with a deterministic sign convention.

    Returns ``(P, s, Q)`` with ``K = P @ diag(s) @ Q.T``, singular values
    nonincreasing, and the first nonzero entry of each column of `P`
    nonnegative.
    """
    K = np.asarray(K, dtype=float)
    P, s, Qt = scipy.linalg.svd(K, lapack_driver="gesvd")
    Q = Qt.T
    for j in range(P.shape[1]):
        col = P[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            P[:, j] = -col
            Q[:, j] = -Q[:, j]
    return P, s, Q
