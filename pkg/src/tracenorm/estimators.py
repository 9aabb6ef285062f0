"""scikit-learn compatible estimators around the trace-norm solver."""

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .geometry import FixedRankPoint
from .problems import MatrixCompletion, MultivariateRegression, ObservedEntries, RegressionData
from .solver import SolverConfig, minimize
from .trustregion import TrustRegionConfig


class _TraceNormMixin:
    def _solver_config(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        return SolverConfig(
            epsilon_sigma=self.epsilon_sigma,
            epsilon_gap=self.epsilon_gap,
            max_rank=self.max_rank,
            tr_cfg=TrustRegionConfig(grad_tol=self.grad_tol),
        )

    def _store(self, sol):
        x = sol.point
        self.solution_ = sol
        self.U_, self.B_, self.V_ = x.U, x.B, x.V
        self.rank_ = x.rank
        self.certified_ = sol.certified
        self.duality_gap_ = sol.duality_gap
        self.rel_duality_gap_ = sol.rel_duality_gap
        self.sigma_gap_ = sol.sigma_gap
        self.n_iter_ = sol.tr_iterations
        self.objective_ = sol.objective

    def _start_point(self):
        if self.warm_start and hasattr(self, "U_"):
            return FixedRankPoint(self.U_, self.B_, self.V_)
        return None


class TraceNormCompletion(_TraceNormMixin, TransformerMixin, BaseEstimator):
    """Low-rank completion of a partially observed matrix.

    Minimizes ``sum over observed (i, j) of (X_ij - Z_ij)^2 + lam ||Z||_*``.

    Parameters
    ----------
    lam : float
        Trace-norm weight.
    max_rank : int, optional
        Stop increasing the rank past this value (result flagged uncertified).
    epsilon_sigma, epsilon_gap : float
        Optimality thresholds on ``sigma_1(S) - lam`` and on the relative
        duality gap; either one certifies the solution.
    ridge : float
        Optional ``ridge * ||Z||_F^2`` term making the problem strongly convex.
    grad_tol : float
        Gradient-norm tolerance of the fixed-rank solves.
    warm_start : bool
        Start from the previous fit when refitting.

    Attributes
    ----------
    U_, B_, V_ : ndarray
        Factors of the solution ``U_ @ B_ @ V_.T``.
    rank_ : int
    certified_ : bool
    duality_gap_, rel_duality_gap_, sigma_gap_ : float
    n_iter_ : int
        Total trust-region iterations.

    Notes
    -----
    Missing entries are NaN in dense input. For sparse input every stored
    entry is observed, including explicit zeros.
    """

    def __init__(self, lam=1.0, max_rank=None, epsilon_sigma=1e-5, epsilon_gap=1e-5,
                 ridge=0.0, grad_tol=1e-7, warm_start=False):
        self.lam = lam
        self.max_rank = max_rank
        self.epsilon_sigma = epsilon_sigma
        self.epsilon_gap = epsilon_gap
        self.ridge = ridge
        self.grad_tol = grad_tol
        self.warm_start = warm_start

    @staticmethod
    def _entries(X):
        if sp.issparse(X):
            X = check_array(X, accept_sparse="coo", ensure_all_finite=True)
            X = X.tocoo()
            return ObservedEntries(X.row, X.col, X.data, X.shape)
        X = check_array(X, ensure_all_finite="allow-nan")
        return ObservedEntries.from_dense(X)

    def fit(self, X, y=None):
        entries = self._entries(X)
        if len(entries) == 0:
            raise ValueError("no observed entries")
        cfg = self._solver_config()
        model = MatrixCompletion(entries, ridge=self.ridge)
        x0 = self._start_point()
        if x0 is not None and x0.shape != model.shape:
            x0 = None
        self._store(minimize(model, self.lam, cfg, x0=x0))
        self.n_features_in_ = entries.shape[1]
        self.shape_ = entries.shape
        self.training_error_ = model.training_error(self.solution_.point)
        return self

    def reconstruction(self):
        check_is_fitted(self, "U_")
        return (self.U_ @ self.B_) @ self.V_.T

    def transform(self, X):
        """Fill the missing entries of `X` with the fitted low-rank values."""
        check_is_fitted(self, "U_")
        if sp.issparse(X):
            X = check_array(X, accept_sparse="coo").tocoo()
            out = self.reconstruction()
            out[X.row, X.col] = X.data
            return out
        X = check_array(X, ensure_all_finite="allow-nan", copy=True)
        if X.shape != self.shape_:
            raise ValueError(f"X has shape {X.shape}, fitted on {self.shape_}")
        miss = np.isnan(X)
        X[miss] = self.reconstruction()[miss]
        return X

    def predict_entries(self, rows, cols):
        check_is_fitted(self, "U_")
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return np.einsum("ij,ij->i", (self.U_ @ self.B_)[rows], self.V_[cols])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.allow_nan = True
        tags.input_tags.sparse = True
        return tags


class TraceNormRegression(_TraceNormMixin, RegressorMixin, BaseEstimator):
    """Multi-output linear regression with a trace-norm penalty on the coefficients.

    Minimizes ``c ||Y - X W||_F^2 + lam ||W||_*`` with ``c = 1 / (n k)``
    when `scaled` (``n`` samples, ``k`` outputs), else ``c = 1``. No
    intercept is fitted; center the data beforehand if needed.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features, n_outputs)
    rank_, certified_, duality_gap_, sigma_gap_, n_iter_
        See `TraceNormCompletion`.
    """

    def __init__(self, lam=1.0, scaled=True, max_rank=None, epsilon_sigma=1e-5,
                 epsilon_gap=1e-5, ridge=0.0, grad_tol=1e-7, warm_start=False):
        self.lam = lam
        self.scaled = scaled
        self.max_rank = max_rank
        self.epsilon_sigma = epsilon_sigma
        self.epsilon_gap = epsilon_gap
        self.ridge = ridge
        self.grad_tol = grad_tol
        self.warm_start = warm_start

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single_output = y.ndim == 1
        model = MultivariateRegression(RegressionData(X, y), scaled=self.scaled, ridge=self.ridge)
        x0 = self._start_point()
        if x0 is not None and x0.shape != model.shape:
            x0 = None
        self._store(minimize(model, self.lam, self._solver_config(), x0=x0))
        self.coef_ = (self.U_ @ self.B_) @ self.V_.T
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = X @ self.coef_
        return out.ravel() if self._single_output else out
