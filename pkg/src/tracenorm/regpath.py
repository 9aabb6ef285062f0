"""Regularization path over a decreasing geometric grid of weights.

Consecutive solutions of equal rank are extrapolated along the
approximate geodesic joining them (predictor) before being re-solved
(corrector); at rank changes the previous solution is used as a warm start.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .linalg import DimensionError
from .solver import SolverConfig, minimize

MIN_STEP = 1e-8


@dataclass
class PathConfig:
    lambda_max: float = 1e3
    lambda_min: float = 1e-3
    gamma: float = 0.95
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    predictor_enabled: bool = True
    step_shrink: float = 0.5

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.lambda_min < self.lambda_max:
            raise ValueError("need 0 < lambda_min < lambda_max")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")


@dataclass
class PathRecord:
    lam: float
    solution: object
    rank: int
    objective: float
    gap: float
    rel_gap: float
    sigma_gap: float
    iterations: int
    mode: str
    inaccuracy: float = float("nan")
    warm_inaccuracy: float = float("nan")
    step: float = float("nan")
    certified: bool = True
    error: str = ""

    def row(self):
        return {
            "lambda": self.lam,
            "rank": self.rank,
            "objective": self.objective,
            "gap": self.gap,
            "rel_gap": self.rel_gap,
            "sigma_gap": self.sigma_gap,
            "iterations": self.iterations,
            "mode": self.mode,
            "inaccuracy": self.inaccuracy,
            "warm_inaccuracy": self.warm_inaccuracy,
            "certified": int(self.certified),
        }


@dataclass
class PathResult:
    records: list
    wall_time: float = 0.0

    def __len__(self):
        return len(self.records)

    @property
    def lambdas(self):
        return np.array([r.lam for r in self.records])

    @property
    def ranks(self):
        return np.array([r.rank for r in self.records])

    @property
    def total_iterations(self):
        return sum(r.iterations for r in self.records)

    def rank_changes(self):
        rk = self.ranks
        return int(np.sum(rk[1:] != rk[:-1]))

    def mode_counts(self):
        warm = sum(r.mode == "warm" for r in self.records)
        return warm, len(self.records) - warm

    def all_certified(self):
        return all(r.certified for r in self.records)


def lambda_grid(lambda_max, lambda_min, gamma):
    """Values ``lambda_max * gamma**i`` while they stay at or above `lambda_min`."""
    if not 0 < gamma < 1 or not 0 < lambda_min <= lambda_max:
        raise ValueError("invalid grid parameters")
    out = [float(lambda_max)]
    # a relative slack absorbs rounding of the product at the end point
    while out[-1] * gamma >= lambda_min * (1 - 1e-12):
        out.append(out[-1] * gamma)
    return np.array(out)


def prediction_inaccuracy(x_hat, x_star, model, lam):
    """Objective excess of a start point over the solution at `lam`."""
    return model.objective(x_hat, lam) - model.objective(x_star, lam)


def predict_next(x_prev, x_curr, lam_prev, lam_curr, lam_next, model, step_shrink=0.5):
    """First-order extrapolation of the solution to `lam_next`.

    Moves from `x_curr` away from `x_prev` along the approximate inverse
    retraction, starting with the step ratio of the weight decrements and
    backtracking until the extrapolated point is no worse at `lam_next`
    than `x_curr` itself.

    Returns
    -------
    x_hat : FixedRankPoint
    step : float
        Accepted step, 0 when falling back to `x_curr`.
    """
    if x_prev.rank != x_curr.rank or x_prev.shape != x_curr.shape:
        raise DimensionError("predictor needs two points of equal rank")
    if x_curr.rank == 0:
        return x_curr, 0.0
    xi = geo.inverse_retract_approx(x_curr, x_prev)
    if geo.norm(x_curr, xi) == 0.0:
        return x_curr, 0.0
    s = (lam_next - lam_curr) / (lam_curr - lam_prev)
    ref = model.objective(x_curr, lam_next)
    while s >= MIN_STEP:
        try:
            cand = geo.retract(x_curr, -s * xi)
            if model.objective(cand, lam_next) <= ref:
                return cand, s
        except np.linalg.LinAlgError:
            pass
        s *= step_shrink
    return x_curr, 0.0


def compute_path(model, cfg=None, lambdas=None, sink=None, progress=None):
    """Solve along a decreasing grid of weights.

    Parameters
    ----------
    model : ProblemModel
    cfg : PathConfig, optional
    lambdas : array_like, optional
        Explicit strictly decreasing grid; overrides the geometric one.
    sink : callable, optional
        Receives solver trace events, tagged with the grid index.
    progress : callable, optional
        Called with each finished PathRecord.

    Returns
    -------
    PathResult
    """
    cfg = cfg or PathConfig()
    if lambdas is None:
        lambdas = lambda_grid(cfg.lambda_max, cfg.lambda_min, cfg.gamma)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size and np.any(np.diff(lambdas) >= 0):
        raise ValueError("weights must be strictly decreasing")
    t0 = time.perf_counter()
    records = []
    sols = []  # last two certified-or-best solutions
    for i, lam in enumerate(lambdas):
        tagged = None if sink is None else (lambda ev, i=i: sink({**ev, "index": i}))
        mode, step = "warm", float("nan")
        x0 = sols[-1].point if sols else None
        if cfg.predictor_enabled and len(sols) >= 2 and sols[-1].rank == sols[-2].rank:
            x0, step = predict_next(sols[-2].point, sols[-1].point, sols[-2].lam,
                                    sols[-1].lam, lam, model, cfg.step_shrink)
            mode = "predicted"
        try:
            sol = minimize(model, lam, cfg.solver_cfg, x0=x0, sink=tagged)
        except (np.linalg.LinAlgError, ArithmeticError, RuntimeError) as err:
            # keep going from the last usable solution
            records.append(PathRecord(lam, None, -1, math.nan, math.nan, math.nan, math.nan,
                                      0, mode, certified=False, error=str(err)))
            continue
        inacc = warm_inacc = float("nan")
        if x0 is not None:
            inacc = prediction_inaccuracy(x0, sol.point, model, lam)
            warm_inacc = prediction_inaccuracy(sols[-1].point, sol.point, model, lam)
        rec = PathRecord(
            lam=float(lam),
            solution=sol,
            rank=sol.rank,
            objective=sol.objective,
            gap=sol.duality_gap,
            rel_gap=sol.rel_duality_gap,
            sigma_gap=sol.sigma_gap,
            iterations=sol.tr_iterations,
            mode=mode,
            inaccuracy=inacc,
            warm_inaccuracy=warm_inacc,
            step=step,
            certified=sol.certified,
        )
        records.append(rec)
        if progress is not None:
            progress(rec)
        sols = (sols + [sol])[-2:]
    return PathResult(records, time.perf_counter() - t0)


def predictor_win_rate(result, min_rank=1):
    """Fraction of predicted records whose start beat the warm-restart start.

    Only records with both inaccuracies defined and rank at least
    `min_rank` count; ties are not wins.
    """
    rows = [r for r in result.records
            if r.mode == "predicted" and r.rank >= min_rank
            and np.isfinite(r.inaccuracy) and np.isfinite(r.warm_inaccuracy)]
    if not rows:
        return float("nan"), 0
    wins = sum(r.inaccuracy < r.warm_inaccuracy for r in rows)
    return wins / len(rows), len(rows)
