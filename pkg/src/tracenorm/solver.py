"""Descent-restart meta-algorithm for trace-norm penalized problems.

Alternates fixed-rank trust-region solves with rank-one descent updates
``X+ = X - beta u v^T`` built from the dominant singular pair of the dual
variable, until ``sigma_1 - lam`` or the relative duality gap certifies
global optimality.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .datasets import stream
from .linalg import small_svd
from .trustregion import TrustRegionConfig, solve_fixed_rank


class DegenerateUpdateError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    p0: int = 1
    epsilon_sigma: float = 1e-5
    epsilon_gap: float = 1e-5
    max_rank: int = None
    tr_cfg: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    max_rank_fixed_inner: int = None
    backtrack_shrink: float = 0.5
    armijo_c: float = 1e-4
    init: str = "zero"
    seed: int = 0
    max_polish: int = 2

    def __post_init__(self):
        if self.epsilon_sigma <= 0 or self.epsilon_gap <= 0:
            raise ValueError("certificate thresholds must be positive")
        if self.p0 < 1:
            raise ValueError("p0 must be at least 1")
        if not 0 < self.backtrack_shrink < 1:
            raise ValueError("backtrack_shrink must lie in (0, 1)")
        if self.init not in ("zero", "random"):
            raise ValueError("init must be 'zero' or 'random'")


@dataclass
class Certificate:
    sigma: float
    sigma_gap: float
    gap: float
    rel_gap: float
    certified: bool
    u: np.ndarray = field(repr=False, default=None)
    v: np.ndarray = field(repr=False, default=None)


@dataclass
class RankUpdate:
    rank: int
    beta: float
    sigma: float
    phi_before: float
    phi_after: float
    bound: float
    backtracks: int

    @property
    def satisfies_descent_bound(self):
        """Armijo-type decrease recorded against the Lipschitz model bound."""
        return self.phi_after <= self.phi_before - self.bound


@dataclass
class ConvexSolution:
    point: geo.FixedRankPoint
    lam: float
    objective: float
    duality_gap: float
    rel_duality_gap: float
    sigma_gap: float
    certified: bool
    history: list = field(default_factory=list)
    rank_updates: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def rank(self):
        return self.point.rank

    @property
    def tr_iterations(self):
        return sum(h["outer_iters"] for h in self.history)


def check_certificate(x, model, lam, cfg, v0=None):
    """Optimality certificate at `x`.

    Returns the dominant singular value of ``S``, ``sigma_1 - lam``, the
    duality gap and relative duality gap, and whether either measure is
    below its threshold.
    """
    S = model.dual_operator(x)
    sigma, u, v = model.dominant_triplet(x, S=S, v0=v0)
    gap, conj = model.duality_gap(x, lam, sigma=sigma)
    rel = gap / abs(conj) if conj != 0 else (0.0 if gap <= 0 else np.inf)
    sgap = sigma - lam
    ok = sgap <= cfg.epsilon_sigma or rel <= cfg.epsilon_gap
    return Certificate(sigma, sgap, gap, rel, bool(ok), u, v)


def embed_rank_increment(x, beta, u, v):
    """Factorization of ``U B V^T - beta u v^T`` on the rank ``p + 1`` space.

    The update is written as ``[U u'/|u'|] K [V v'/|v'|]^T`` with a small
    ``(p+1) x (p+1)`` core ``K``, whose SVD gives the new factors.
    """
    U, B, V = x.U, x.B, x.V
    n, m = x.shape
    p = x.rank
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    a = U.T @ u
    b = V.T @ v
    up = u - U @ a
    vp = -beta * (v - V @ b)
    nu, nv = np.linalg.norm(up), np.linalg.norm(vp)
    rng = np.random.default_rng(p)
    if nu < 1e-14:
        up = _orthogonal_direction(U, rng)
        nu_eff = 0.0
    else:
        up = up / nu
        nu_eff = nu
    if nv < 1e-14:
        vp = _orthogonal_direction(V, rng)
        nv_eff = 0.0
    else:
        vp = vp / nv
        nv_eff = nv
    L = np.eye(p + 1)
    L[:p, p] = a
    L[p, p] = nu_eff
    R = np.eye(p + 1)
    R[:p, p] = -beta * b
    R[p, p] = nv_eff
    core = np.zeros((p + 1, p + 1))
    core[:p, :p] = B
    core[p, p] = 1.0
    K = L @ core @ R.T
    P, s, Q = small_svd(K)
    keep = s > 1e-14 * max(s[0], np.finfo(float).tiny)
    Un = np.column_stack([U, up]) @ P[:, keep]
    Vn = np.column_stack([V, vp]) @ Q[:, keep]
    return geo.FixedRankPoint(Un, np.diag(s[keep]), Vn, check=False)


def _orthogonal_direction(U, rng):
    w = rng.standard_normal(U.shape[0])
    for _ in range(2):
        w -= U @ (U.T @ w)
    return w / np.linalg.norm(w)


def rank_one_update(x, model, lam, lipschitz, cfg, cert):
    """Backtracking rank-one descent step from a fixed-rank stationary point.

    Starts at ``beta = (sigma_1 - lam) / L_f`` and shrinks until
    ``phi(X+) <= phi(X) - c beta (sigma_1 - lam - L_f beta / 2)``.

    Returns
    -------
    x_new : FixedRankPoint
    info : RankUpdate
    """
    sigma, u, v = cert.sigma, cert.u, cert.v
    excess = sigma - lam
    if excess <= 0:
        raise DegenerateUpdateError("sigma_1 <= lam: no descent from a rank-one update")
    beta0 = excess / lipschitz
    beta = beta0
    phi0 = model.objective(x, lam)
    tries = 0
    while beta >= 1e-16 * beta0:
        x_new = embed_rank_increment(x, beta, u, v)
        phi = model.objective(x_new, lam)
        bound = cfg.armijo_c * beta * (excess - 0.5 * lipschitz * beta)
        if phi <= phi0 - bound and phi < phi0:
            return x_new, RankUpdate(x.rank, beta, sigma, phi0, phi, bound, tries)
        beta *= cfg.backtrack_shrink
        tries += 1
    raise DegenerateUpdateError("rank-one backtracking underflow; certificate should have fired")


def initial_point(model, cfg):
    n, m = model.shape
    if cfg.init == "zero":
        return geo.FixedRankPoint.zero(n, m)
    return geo.random_point(n, m, cfg.p0, stream(cfg.seed, "initializer"))


def minimize(model, lam, cfg=None, x0=None, sink=None):
    """Solve ``min f(X) + lam ||X||_*`` by the descent-restart scheme.

    Parameters
    ----------
    model : ProblemModel
    lam : float
        Regularization weight, positive.
    cfg : SolverConfig, optional
    x0 : FixedRankPoint, optional
        Start point. By default the zero matrix (rank 0), whose first rank
        increment is the rank-one descent step from zero; ``cfg.init =
        'random'`` draws a random rank-``p0`` point instead.
    sink : callable, optional
        Receives trace events (dicts).

    Returns
    -------
    ConvexSolution
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    cfg = cfg or SolverConfig()
    n, m = model.shape
    max_rank = min(n, m) if cfg.max_rank is None else min(cfg.max_rank, n, m)
    t0 = time.perf_counter()
    x = initial_point(model, cfg) if x0 is None else x0
    if x.shape != model.shape:
        raise ValueError(f"start point shape {x.shape} does not match {model.shape}")
    tr_cfg = cfg.tr_cfg
    if cfg.max_rank_fixed_inner is not None:
        tr_cfg = replace(tr_cfg, max_outer=cfg.max_rank_fixed_inner)
    # same-rank re-solve: only the gradient and model-decrease tests may stop it
    polish_cfg = replace(tr_cfg, rel_cost_tol=min(tr_cfg.rel_cost_tol, 1e-15),
                         abs_cost_tol=min(tr_cfg.abs_cost_tol, 1e-300),
                         grad_tol=1e-3 * tr_cfg.grad_tol)
    polish_left = cfg.max_polish
    solve_cfg = tr_cfg
    lip = model.lipschitz()
    history, updates, grad_norms = [], [], []
    while True:
        res = solve_fixed_rank(model, lam, x, solve_cfg, sink=sink, rank_label=x.rank)
        x = res.point
        history.append({
            "rank": x.rank,
            "outer_iters": res.outer_iters,
            "inner_iters": res.inner_iters,
            "cost": res.cost,
            "grad_norm": res.grad_norm,
            "stop_reason": res.stop_reason.value,
        })
        grad_norms.append(res.grad_norms)
        # no warm start: the previous dominant pair now lies inside range(U), range(V)
        cert = check_certificate(x, model, lam, cfg)
        history[-1].update(sigma_gap=cert.sigma_gap, rel_gap=cert.rel_gap, gap=cert.gap)
        if sink is not None:
            sink({"event": "certificate", "rank": x.rank, "cost": res.cost,
                  "sigma_gap": cert.sigma_gap, "gap": cert.gap, "rel_gap": cert.rel_gap,
                  "certified": cert.certified})
        if cert.certified:
            # a cost-variation stop can leave the gap loose while sigma_1 - lam already passes
            if cert.rel_gap <= cfg.epsilon_gap or polish_left == 0 or solve_cfg is polish_cfg:
                break
            polish_left -= 1
            solve_cfg = polish_cfg
            continue
        if x.rank >= max_rank:
            # small singular values hide large Euclidean gradients from the metric
            if polish_left == 0:
                break
            polish_left -= 1
            solve_cfg = polish_cfg
            continue
        try:
            x_new, info = rank_one_update(x, model, lam, lip, cfg, cert)
        except DegenerateUpdateError:
            break
        if x_new.rank <= x.rank:
            # the dominant pair lies inside the current subspaces, so sigma_1 - lam
            # is stationarity noise: tighten the fixed-rank solve, then give up
            if polish_left == 0:
                break
            polish_left -= 1
            solve_cfg = polish_cfg
            if info.phi_after < model.objective(x, lam):
                x = x_new
            continue
        solve_cfg = tr_cfg
        x = x_new
        updates.append(info)
        if sink is not None:
            sink({"event": "rank_update", "rank": x.rank, "beta": info.beta,
                  "cost_before": info.phi_before, "cost_after": info.phi_after})
    return ConvexSolution(
        point=x,
        lam=lam,
        objective=model.objective(x, lam),
        duality_gap=cert.gap,
        rel_duality_gap=cert.rel_gap,
        sigma_gap=cert.sigma_gap,
        certified=cert.certified,
        history=history,
        rank_updates=updates,
        grad_norms=grad_norms,
        wall_time=time.perf_counter() - t0,
    )
