"""Trace-norm regularized low-rank matrix optimization."""

from .estimators import TraceNormCompletion, TraceNormRegression
from .geometry import FixedRankPoint
from .oracle import solve_convex_dense
from .problems import MatrixCompletion, MultivariateRegression, ObservedEntries, RegressionData
from .regpath import PathConfig, compute_path
from .solver import SolverConfig, minimize

__all__ = [
    "FixedRankPoint",
    "MatrixCompletion",
    "MultivariateRegression",
    "ObservedEntries",
    "PathConfig",
    "RegressionData",
    "SolverConfig",
    "TraceNormCompletion",
    "TraceNormRegression",
    "compute_path",
    "minimize",
    "solve_convex_dense",
]

__version__ = "0.1.0"
