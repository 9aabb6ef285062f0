"""Riemannian trust-region method with a truncated CG inner solver.

Minimizes ``f(U B V^T) + lam * tr(B)`` at fixed rank. Iterates move along
horizontal vectors and are mapped back with the retraction.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import geometry as geo
from .linalg import SingularityError

RHO_SHRINK = 0.25


class StopReason(str, Enum):
    GRADIENT = "gradient"
    COST_STAGNATION = "cost_stagnation"
    MAX_ITERS = "max_iters"


class TCGStatus(str, Enum):
    INTERIOR = "interior"
    BOUNDARY_HIT = "boundary_hit"
    NEGATIVE_CURVATURE = "negative_curvature"
    MAX_INNER = "max_inner"


@dataclass
class TrustRegionConfig:
    delta0: float = 1.0
    delta_max: float = 2.0**10
    rho_accept: float = 0.1
    rho_expand: float = 0.75
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0
    grad_tol: float = 1e-7
    rel_cost_tol: float = 1e-10
    abs_cost_tol: float = 1e-10
    max_outer: int = 500
    max_inner: int = 1000
    rho_reg: float = 1e3  # multiples of eps*max(1, |f|) added to both terms of rho

    def __post_init__(self):
        if not 0 < self.rho_accept < self.rho_expand < 1:
            raise ValueError("need 0 < rho_accept < rho_expand < 1")
        if not 0 < self.delta0 <= self.delta_max:
            raise ValueError("need 0 < delta0 <= delta_max")
        for name in ("tcg_kappa", "tcg_theta", "grad_tol", "rel_cost_tol", "abs_cost_tol", "rho_reg"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 0 or self.max_inner < 1:
            raise ValueError("iteration caps must be nonnegative")


@dataclass
class FixedRankResult:
    point: geo.FixedRankPoint
    cost: float
    grad_norm: float
    outer_iters: int
    inner_iters: int
    stop_reason: StopReason
    grad_norms: list = field(default_factory=list)
    costs: list = field(default_factory=list)


def tcg(x, grad, hess, delta, cfg):
    """Truncated (Steihaug-Toint) conjugate gradient on the horizontal space.

    Approximately minimizes ``<grad, eta> + 1/2 <eta, hess(eta)>`` subject
    to ``||eta|| <= delta`` in the metric at `x`.

    Returns
    -------
    eta : TangentVector
    Heta : TangentVector
        ``hess(eta)``, reused by the caller for the model decrease.
    status : TCGStatus
    inner : int
        Number of Hessian applications.
    """
    inner_prod = lambda a, b: geo.metric(x, a, b)  # noqa: E731
    eta = geo.TangentVector.zeros_like(x)
    Heta = geo.TangentVector.zeros_like(x)
    r = grad
    rr = inner_prod(r, r)
    r0 = math.sqrt(rr)
    if r0 == 0.0:
        return eta, Heta, TCGStatus.INTERIOR, 0
    target = r0 * min(r0**cfg.tcg_theta, cfg.tcg_kappa)
    max_inner = cfg.max_inner
    d = -r
    ee, ed, dd = 0.0, 0.0, rr  # <eta,eta>, <eta,d>, <d,d>
    status = TCGStatus.MAX_INNER
    j = 0
    for j in range(1, max_inner + 1):
        Hd = hess(d)
        dHd = inner_prod(d, Hd)
        alpha = rr / dHd if dHd > 0 else 0.0
        ee_new = ee + 2.0 * alpha * ed + alpha * alpha * dd
        if dHd <= 0 or ee_new >= delta * delta:
            # step to the boundary along d
            tau = (-ed + math.sqrt(max(ed * ed + dd * (delta * delta - ee), 0.0))) / dd
            eta = eta + tau * d
            Heta = Heta + tau * Hd
            status = TCGStatus.NEGATIVE_CURVATURE if dHd <= 0 else TCGStatus.BOUNDARY_HIT
            break
        eta = eta + alpha * d
        Heta = Heta + alpha * Hd
        ee = ee_new
        r = r + alpha * Hd
        rr_new = inner_prod(r, r)
        if math.sqrt(rr_new) <= target:
            status = TCGStatus.INTERIOR
            break
        beta = rr_new / rr
        rr = rr_new
        d = -r + beta * d
        ed = beta * (ed + alpha * dd)
        dd = rr + beta * beta * dd
    return eta, Heta, status, j


class _LocalModel:
    """Gradient and Hessian closure of the cost at a fixed point."""

    def __init__(self, model, lam, x):
        self.x = x
        self.S = model.dual_operator(x)
        self.egrad = model.egrad(x, lam, S=self.S)
        self.grad = geo.egrad_to_rgrad(x, self.egrad)
        self.grad_norm = geo.norm(x, self.grad)
        self._model = model

    def hess(self, xi):
        eh = self._model.ehess(self.x, xi, S=self.S)
        return geo.apply_hessian(self.x, xi, self.egrad, eh)


def riemannian_gradient(model, lam, x):
    return _LocalModel(model, lam, x).grad


def riemannian_hessian(model, lam, x):
    """Closure ``xi -> Hess[xi]`` at `x`."""
    return _LocalModel(model, lam, x).hess


def solve_fixed_rank(model, lam, x0, cfg=None, sink=None, rank_label=None):
    """Minimize the penalized cost on the rank-``p`` quotient manifold.

    Parameters
    ----------
    model : ProblemModel
    lam : float
    x0 : FixedRankPoint
    cfg : TrustRegionConfig, optional
    sink : callable, optional
        Receives one dict per outer iteration.

    Returns
    -------
    FixedRankResult
    """
    cfg = cfg or TrustRegionConfig()
    x = x0
    fx = model.objective(x, lam)
    loc = _LocalModel(model, lam, x)
    delta = cfg.delta0
    inner_total = 0
    grad_norms = [loc.grad_norm]
    costs = [fx]
    reason = StopReason.MAX_ITERS
    k = 0
    if x.rank == 0:
        return FixedRankResult(x, fx, 0.0, 0, 0, StopReason.GRADIENT, grad_norms, costs)
    while True:
        # the Stiefel slots carry a factor B: rescale so the test bounds the Euclidean residual
        if loc.grad_norm <= cfg.grad_tol * min(1.0, float(x.eig[0][0])):
            reason = StopReason.GRADIENT
            break
        if k >= cfg.max_outer:
            reason = StopReason.MAX_ITERS
            break
        k += 1
        eta, Heta, status, inner = tcg(x, loc.grad, loc.hess, delta, cfg)
        inner_total += inner
        pred = -(geo.metric(x, loc.grad, eta) + 0.5 * geo.metric(x, eta, Heta))
        if not pred > 0:
            reason = StopReason.COST_STAGNATION
            _emit(sink, rank_label, k, fx, loc.grad_norm, delta, float("nan"), inner, status, False)
            break
        # near a minimizer both decreases sink into the rounding of f: the shift pushes rho to 1
        reg = cfg.rho_reg * max(1.0, abs(fx)) * np.finfo(float).eps
        try:
            x_new = geo.retract(x, eta)
            f_new = model.objective(x_new, lam)
        except (SingularityError, np.linalg.LinAlgError):
            x_new, f_new = None, np.inf
        rho = (fx - f_new + reg) / (pred + reg) if np.isfinite(f_new) else -np.inf
        eta_norm = geo.norm(x, eta)
        if rho < RHO_SHRINK:
            delta *= 0.25
        elif rho > cfg.rho_expand and status in (TCGStatus.BOUNDARY_HIT, TCGStatus.NEGATIVE_CURVATURE):
            delta = min(2.0 * delta, cfg.delta_max)
        accepted = rho > cfg.rho_accept and f_new <= fx + reg
        stalled = False
        if accepted:
            change = fx - f_new
            old_grad = loc.grad_norm
            x, fx = x_new, f_new
            loc = _LocalModel(model, lam, x)
            grad_norms.append(loc.grad_norm)
            costs.append(fx)
            # no progress visible in the cost or in the gradient: rounding floor reached
            stalled = pred <= reg and loc.grad_norm >= old_grad
        _emit(sink, rank_label, k, fx, loc.grad_norm, delta, rho, inner, status, accepted)
        if accepted and (stalled or change <= cfg.abs_cost_tol or change <= cfg.rel_cost_tol * abs(fx)):
            reason = StopReason.COST_STAGNATION
            break
        if delta < 1e-14 * max(1.0, eta_norm):
            reason = StopReason.COST_STAGNATION
            break
    return FixedRankResult(x, fx, loc.grad_norm, k, inner_total, reason, grad_norms, costs)


def _emit(sink, rank, k, cost, gnorm, delta, rho, inner, status, accepted):
    if sink is None:
        return
    sink({
        "event": "tr_iter",
        "rank": rank,
        "iter": k,
        "cost": float(cost),
        "grad_norm": float(gnorm),
        "delta": float(delta),
        "rho": float(rho),
        "inner": int(inner),
        "tcg": status.value,
        "accepted": bool(accepted),
    })
