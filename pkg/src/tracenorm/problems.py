"""Smooth losses bound to the fixed-rank geometry.

A model supplies ``f(U B V^T)``, the dual variable ``S = Grad f`` as a
structured operator, the directional derivative of ``S``, and the Fenchel
conjugate needed for the duality gap. Two models ship: matrix completion
and multivariate linear regression.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .geometry import FixedRankPoint, TangentVector
from .linalg import ConvergenceError, DimensionError, dominant_singular_triplet, lanczos_triplet

TAU_GAP = 1e-9


class StructuredMatrix:
    """Sparse or dense matrix plus a sum of factored terms ``L M R^T``.

    Only products with thin matrices are ever needed, so the factored
    terms are never expanded.
    """

    def __init__(self, data, factors=(), shape=None):
        self.data = data
        self.factors = [f for f in factors]
        if shape is None:
            shape = data.shape
        self.shape = tuple(shape)

    def dot(self, A):
        if self.data is not None:
            out = np.asarray(self.data @ A)
        else:
            out = np.zeros((self.shape[0],) + A.shape[1:])
        for L, M, R in self.factors:
            out = out + L @ (M @ (R.T @ A))
        return out

    def rdot(self, A):
        """``self^T @ A``."""
        if self.data is not None:
            out = np.asarray(self.data.T @ A)
        else:
            out = np.zeros((self.shape[1],) + A.shape[1:])
        for L, M, R in self.factors:
            out = out + R @ (M.T @ (L.T @ A))
        return out

    def products(self, x):
        """``(S V B, U^T S V, S^T U B)`` at the point `x`."""
        SV = self.dot(x.V)
        StU = self.rdot(x.U)
        return SV @ x.B, x.U.T @ SV, StU @ x.B

    def as_linear_operator(self):
        return LinearOperator(
            self.shape,
            matvec=lambda v: self.dot(np.ravel(v)),
            rmatvec=lambda u: self.rdot(np.ravel(u)),
            dtype=float,
        )

    def to_dense(self):
        if self.data is None:
            out = np.zeros(self.shape)
        elif sp.issparse(self.data):
            out = self.data.toarray()
        else:
            out = np.array(self.data, dtype=float)
        for L, M, R in self.factors:
            out = out + L @ M @ R.T
        return out


class ProblemModel(ABC):
    """Composite objective ``psi(A X) + ridge * ||X||_F^2 + lam * ||X||_*``.

    Subclasses implement the data term ``psi(A X)``. The optional ridge is
    folded into an augmented operator ``X -> (A X, X)`` so that the duality
    gap keeps a closed form.
    """

    ridge = 0.0

    @property
    @abstractmethod
    def shape(self):
        """Shape ``(n, m)`` of the matrix variable."""

    # data term -----------------------------------------------------------

    @abstractmethod
    def data_loss(self, x):
        """``psi(A X)`` at a fixed-rank point."""

    @abstractmethod
    def data_gradient(self, x):
        """Sparse or dense matrix ``A^*(Grad psi)`` at `x`."""

    @abstractmethod
    def data_gradient_derivative(self, x, Z):
        """Directional derivative of ``data_gradient`` along the triple `Z`."""

    @abstractmethod
    def data_conjugate(self, x, theta):
        """``psi^*(theta * Grad psi)`` at `x`."""

    @abstractmethod
    def data_lipschitz(self):
        """Lipschitz constant of ``Grad_X psi(A X)``."""

    @abstractmethod
    def dense_data_loss(self, X):
        """``psi(A X)`` for a dense matrix (reference computations only)."""

    @abstractmethod
    def dense_data_gradient(self, X):
        """Dense gradient of ``psi(A X)`` (reference computations only)."""

    @abstractmethod
    def dense_data_conjugate(self, X, theta):
        """``psi^*(theta * Grad psi)`` at a dense matrix (reference computations only)."""

    # composite -----------------------------------------------------------

    def loss(self, x):
        """Smooth part ``f(U B V^T)``."""
        f = self.data_loss(x)
        if self.ridge:
            f += self.ridge * float(np.sum(x.B**2))
        return f

    def objective(self, x, lam):
        return self.loss(x) + lam * x.trace_norm()

    def dense_objective(self, X, lam):
        f = self.dense_data_loss(X)
        if self.ridge:
            f += self.ridge * float(np.sum(X**2))
        return f + lam * float(np.sum(np.linalg.svd(X, compute_uv=False)))

    def dense_gradient(self, X):
        return self.dense_data_gradient(X) + 2.0 * self.ridge * X

    def dual_operator(self, x):
        """The dual variable ``S = Grad f(U B V^T)``."""
        D = self.data_gradient(x)
        factors = []
        if self.ridge and x.rank:
            factors.append((x.U, 2.0 * self.ridge * x.B, x.V))
        return StructuredMatrix(D, factors, shape=self.shape)

    def egrad(self, x, lam, S=None):
        """Euclidean gradient ``(S V B, U^T S V + lam I, S^T U B)``."""
        if S is None:
            S = self.dual_operator(x)
        SVB, UtSV, StUB = S.products(x)
        return TangentVector(SVB, UtSV + lam * np.eye(x.rank), StUB)

    def ehess(self, x, Z, S=None):
        """Directional derivative of the Euclidean gradient triple along `Z`.

        Independent of ``lam``.
        """
        if S is None:
            S = self.dual_operator(x)
        U, B, V = x.U, x.B, x.V
        Sd = self.data_gradient_derivative(x, Z)
        factors = []
        if self.ridge:
            c = 2.0 * self.ridge
            factors = [(Z.U, c * B, V), (U, c * Z.B, V), (U, c * B, Z.V)]
        if isinstance(Sd, StructuredMatrix):
            Sd = StructuredMatrix(Sd.data, Sd.factors + factors, shape=self.shape)
        else:
            Sd = StructuredMatrix(Sd, factors, shape=self.shape)
        SV = S.dot(V)
        StU = S.rdot(U)
        SdV = Sd.dot(V)
        SdtU = Sd.rdot(U)
        SZv = S.dot(Z.V)
        StZu = S.rdot(Z.U)
        hU = SV @ Z.B + SZv @ B + SdV @ B
        hB = Z.U.T @ SV + U.T @ SZv + U.T @ SdV
        hV = StU @ Z.B + StZu @ B + SdtU @ B
        return TangentVector(hU, hB, hV)

    def lipschitz(self):
        return self.data_lipschitz() + 2.0 * self.ridge

    def lambda_max(self):
        """``||S||_op`` at ``X = 0``: the smallest weight whose solution is zero."""
        n, m = self.shape
        return self.dominant_triplet(FixedRankPoint.zero(n, m))[0]

    def dominant_triplet(self, x, S=None, v0=None, **kwargs):
        """Dominant singular triplet of ``S``.

        Power iteration first; when it stalls (clustered top singular values,
        typical at fixed-rank stationary points) the triplet is recomputed by
        Lanczos rather than trusting the stalled iterate.
        """
        if S is None:
            S = self.dual_operator(x)
        try:
            return dominant_singular_triplet(S, v0=v0, **kwargs)
        except ConvergenceError:
            return lanczos_triplet(S)

    def duality_gap(self, x, lam, sigma=None, S=None):
        """Duality gap and ``|psi^*(M)|`` for the scaled dual candidate.

        ``M = min(1, lam / sigma) Grad psi`` where ``sigma`` is the dominant
        singular value of ``S = A^*(Grad psi)`` (augmented with the ridge
        block when present).

        Returns
        -------
        gap : float
        conj : float
            ``psi^*(M)``; the relative gap is ``gap / |conj|``.
        """
        if sigma is None:
            sigma = self.dominant_triplet(x, S=S)[0]
        theta = 1.0 if sigma <= lam else lam / sigma
        conj = self.data_conjugate(x, theta)
        if self.ridge:
            conj += theta**2 * self.ridge * float(np.sum(x.B**2))
        gap = self.objective(x, lam) + conj
        return gap, conj


# ---------------------------------------------------------------------------
# matrix completion


class ObservedEntries:
    """Observed entries of an ``n x m`` matrix as sorted coordinate triplets.

    Parameters
    ----------
    rows, cols : array_like of int
        Zero-based indices.
    values : array_like of float
    shape : tuple of int
    """

    def __init__(self, rows, cols, values, shape):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        n, m = (int(s) for s in shape)
        if not (rows.size == cols.size == values.size):
            raise DimensionError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
            raise ValueError("observed index out of range")
        if not np.all(np.isfinite(values)):
            raise ValueError("observed values must be finite")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        key = rows * m + cols
        if key.size > 1 and np.any(key[1:] == key[:-1]):
            raise ValueError("duplicate observed entries")
        self.rows, self.cols, self.values = rows, cols, values
        self.shape = (n, m)
        self.indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)

    def __len__(self):
        return self.values.size

    @classmethod
    def from_dense(cls, X, mask=None):
        X = np.asarray(X, dtype=float)
        if mask is None:
            mask = ~np.isnan(X)
        rows, cols = np.nonzero(mask)
        return cls(rows, cols, X[rows, cols], X.shape)

    def to_csr(self, data=None):
        """CSR matrix on the mask; reuses the canonical index structure."""
        if data is None:
            data = self.values
        return sp.csr_matrix((data, self.cols, self.indptr), shape=self.shape)

    def dense(self, fill=0.0):
        X = np.full(self.shape, fill, dtype=float)
        X[self.rows, self.cols] = self.values
        return X

    def mask(self):
        W = np.zeros(self.shape, dtype=bool)
        W[self.rows, self.cols] = True
        return W

    def subset(self, idx):
        idx = np.asarray(idx)
        return ObservedEntries(self.rows[idx], self.cols[idx], self.values[idx], self.shape)


def _entries(A, Bm, rows, cols):
    """Entries ``(A Bm^T)[rows, cols]`` without forming the product."""
    return np.einsum("ij,ij->i", A[rows], Bm[cols])


class MatrixCompletion(ProblemModel):
    """Loss ``||W o (X~ - X)||_F^2`` over observed entries.

    The dual variable ``S = 2 W o (U B V^T - X~)`` is sparse on the mask.
    """

    def __init__(self, data, ridge=0.0):
        if not isinstance(data, ObservedEntries):
            raise TypeError("data must be ObservedEntries")
        self.data = data
        self.ridge = float(ridge)

    @property
    def shape(self):
        return self.data.shape

    def predict_entries(self, x, rows=None, cols=None):
        d = self.data
        rows = d.rows if rows is None else rows
        cols = d.cols if cols is None else cols
        if x.rank == 0:
            return np.zeros(np.size(rows))
        return _entries(x.U @ x.B, x.V, rows, cols)

    def residual(self, x):
        return self.predict_entries(x) - self.data.values

    def data_loss(self, x):
        r = self.residual(x)
        return float(r @ r)

    def training_error(self, x):
        return self.data_loss(x)

    def data_gradient(self, x):
        return self.data.to_csr(2.0 * self.residual(x))

    def data_gradient_derivative(self, x, Z):
        d = self.data
        vals = _entries(Z.U @ x.B + x.U @ Z.B, x.V, d.rows, d.cols)
        vals += _entries(x.U @ x.B, Z.V, d.rows, d.cols)
        return d.to_csr(2.0 * vals)

    def data_conjugate(self, x, theta):
        M = theta * 2.0 * self.residual(x)
        return float(M @ M / 4.0 + M @ self.data.values)

    def data_lipschitz(self):
        return 2.0

    def dense_data_loss(self, X):
        d = self.data
        r = X[d.rows, d.cols] - d.values
        return float(r @ r)

    def dense_data_gradient(self, X):
        d = self.data
        G = np.zeros(self.shape)
        G[d.rows, d.cols] = 2.0 * (X[d.rows, d.cols] - d.values)
        return G

    def dense_data_conjugate(self, X, theta):
        d = self.data
        M = theta * 2.0 * (X[d.rows, d.cols] - d.values)
        return float(M @ M / 4.0 + M @ d.values)

    def scale(self):
        """Operator norm of ``W o X~``."""
        return self.dominant_triplet(None, S=StructuredMatrix(self.data.to_csr()))[0]


# ---------------------------------------------------------------------------
# multivariate linear regression


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Inputs ``X`` (n x q), responses ``Y`` (n x k) and cached cross products."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("regression data must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "gram", X.T @ X)
        object.__setattr__(self, "cross", X.T @ Y)

    @property
    def n(self):
        return self.X.shape[0]


class MultivariateRegression(ProblemModel):
    """Loss ``c ||Y - X W||_F^2`` with ``c = 1/(n k)`` when `scaled`, else 1.

    The coefficient matrix ``W`` (q x k) is the fixed-rank variable.
    """

    def __init__(self, data, scaled=False, ridge=0.0):
        if not isinstance(data, RegressionData):
            raise TypeError("data must be RegressionData")
        self.data = data
        self.scaled = bool(scaled)
        self.ridge = float(ridge)
        n, k = data.Y.shape
        self.c = 1.0 / (n * k) if scaled else 1.0
        self._lipschitz = None

    @property
    def shape(self):
        return self.data.X.shape[1], self.data.Y.shape[1]

    def predict(self, x, X=None):
        X = self.data.X if X is None else X
        if x.rank == 0:
            return np.zeros((X.shape[0], x.V.shape[0]))
        return (X @ x.U) @ (x.B @ x.V.T)

    def data_loss(self, x):
        R = self.data.Y - self.predict(x)
        return self.c * float(np.sum(R * R))

    def data_gradient(self, x):
        d = self.data
        G = -d.cross
        if x.rank:
            G = (d.gram @ x.U) @ (x.B @ x.V.T) + G
        return 2.0 * self.c * G

    def data_gradient_derivative(self, x, Z):
        # 2c X^T X (Z_U B V^T + U Z_B V^T + U B Z_V^T), kept factored
        G = self.data.gram
        c2 = 2.0 * self.c
        GU = G @ x.U
        return StructuredMatrix(None, [
            (G @ Z.U, c2 * x.B, x.V),
            (GU, c2 * Z.B, x.V),
            (GU, c2 * x.B, Z.V),
        ], shape=self.shape)

    def data_conjugate(self, x, theta):
        Gpsi = 2.0 * self.c * (self.predict(x) - self.data.Y)
        M = theta * Gpsi
        return float(np.sum(M * M) / (4.0 * self.c) + np.sum(M * self.data.Y))

    def data_lipschitz(self):
        if self._lipschitz is None:
            sig = self.dominant_triplet(None, S=StructuredMatrix(self.data.gram))[0]
            self._lipschitz = 2.0 * self.c * sig
        return self._lipschitz

    def dense_data_loss(self, W):
        R = self.data.Y - self.data.X @ W
        return self.c * float(np.sum(R * R))

    def dense_data_gradient(self, W):
        return 2.0 * self.c * (self.data.gram @ W - self.data.cross)

    def dense_data_conjugate(self, W, theta):
        M = theta * 2.0 * self.c * (self.data.X @ W - self.data.Y)
        return float(np.sum(M * M) / (4.0 * self.c) + np.sum(M * self.data.Y))

    def scale(self):
        """Operator norm of ``2 c X^T Y``, the dual variable at zero."""
        return 2.0 * self.c * float(np.linalg.norm(self.data.cross, 2))

    def test_rmse(self, x, X_test, Y_test):
        R = Y_test - self.predict(x, X_test)
        return float(np.sqrt(np.mean(R * R)))


def lipschitz_estimate(model):
    return model.lipschitz()


def check_point(model, x):
    if x.shape != model.shape:
        raise DimensionError(f"point shape {x.shape} does not match model shape {model.shape}")
    return x


__all__ = [
    "FixedRankPoint",
    "MatrixCompletion",
    "MultivariateRegression",
    "ObservedEntries",
    "ProblemModel",
    "RegressionData",
    "StructuredMatrix",
    "TAU_GAP",
    "lipschitz_estimate",
]
