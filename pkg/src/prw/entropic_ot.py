"""Entropic regularized OT: stabilized Sinkhorn scaling plus polytope rounding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measures import DiscreteMeasure
from .stiefel import StiefelPoint

__all__ = [
    "TransportPlan",
    "SinkhornState",
    "projected_cost",
    "sinkhorn_solve",
    "round_to_polytope",
    "entropic_objective",
]

_MARGINAL_TOL = 1e-9
# scaling factors are absorbed into the log potentials past this magnitude
_ABSORB_THRESHOLD = 1e100


@dataclass(frozen=True)
class TransportPlan:
    """A coupling with prescribed row and column marginals."""

    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def __post_init__(self):
        pi = np.ascontiguousarray(np.asarray(self.matrix, dtype=float))
        r = np.ascontiguousarray(np.asarray(self.row_marginal, dtype=float))
        c = np.ascontiguousarray(np.asarray(self.col_marginal, dtype=float))
        if pi.shape != (r.size, c.size):
            raise ValueError(f"plan shape {pi.shape} != ({r.size}, {c.size})")
        if np.any(pi < 0):
            raise ValueError("plan entries must be nonnegative")
        if abs(pi.sum() - 1.0) > _MARGINAL_TOL:
            raise ValueError(f"plan mass {pi.sum()!r} != 1")
        if np.abs(pi.sum(axis=1) - r).sum() > _MARGINAL_TOL:
            raise ValueError("row marginals violated")
        if np.abs(pi.sum(axis=0) - c).sum() > _MARGINAL_TOL:
            raise ValueError("column marginals violated")
        for arr in (pi, r, c):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", pi)
        object.__setattr__(self, "row_marginal", r)
        object.__setattr__(self, "col_marginal", c)


@dataclass
class SinkhornState:
    """Log-domain dual potentials and bookkeeping from one Sinkhorn call."""

    log_u: np.ndarray
    log_v: np.ndarray
    eta: float
    projected_cost: np.ndarray
    iterations: int = 0
    converged: bool = True
    marginal_error: float = 0.0
    dual_history: list = field(default_factory=list)


def projected_cost(
    mu: DiscreteMeasure, nu: DiscreteMeasure, U: StiefelPoint
) -> np.ndarray:
    """Pairwise squared distances between the supports after projecting by U."""
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if U.d != mu.dim:
        raise ValueError(f"projection rows {U.d} != ambient dimension {mu.dim}")
    from scipy.spatial.distance import cdist

    px = mu.points @ U.matrix
    py = nu.points @ U.matrix
    cost = cdist(px, py, metric="sqeuclidean")
    np.maximum(cost, 0.0, out=cost)
    return cost


def round_to_polytope(B: np.ndarray, r: np.ndarray, c: np.ndarray) -> TransportPlan:
    """Project a nonnegative matrix onto the transportation polytope.

    Row-scale down, column-scale down, then fill the remaining deficit with a
    rank-one correction; the l1 move is at most twice the marginal violation.
    """
    B = np.asarray(B, dtype=float)
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(B < 0):
        raise ValueError("input matrix must be nonnegative")
    if not np.any(B > 0):
        raise ValueError("input matrix is zero")
    row = B.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale_r = np.where(row > 0, np.minimum(r / row, 1.0), 1.0)
    X = B * scale_r[:, None]
    col = X.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale_c = np.where(col > 0, np.minimum(c / col, 1.0), 1.0)
    Y = X * scale_c[None, :]
    err_r = np.maximum(r - Y.sum(axis=1), 0.0)
    err_c = np.maximum(c - Y.sum(axis=0), 0.0)
    deficit = err_r.sum()
    if deficit > 0:
        Y = Y + np.outer(err_r, err_c) / deficit
    return TransportPlan(Y, r, c)


def _dual_objective(log_u, log_v, M, r, c):
    B = np.exp(M + log_u[:, None] + log_v[None, :])
    return float(B.sum() - log_u @ r - log_v @ c)


def sinkhorn_solve(
    cost: np.ndarray,
    r: np.ndarray,
    c: np.ndarray,
    eta: float,
    tol: float,
    max_iter: int = 100_000,
    warm_start: tuple[np.ndarray, np.ndarray] | None = None,
    record_dual: bool = False,
) -> tuple[TransportPlan, SinkhornState]:
    """Entropic OT by alternating diagonal scaling, stabilized in the log domain.

    Stops once the l1 margin violation of the scaling matrix drops below
    `tol`, then rounds to exact feasibility. Scaling vectors are absorbed
    into log potentials whenever they threaten overflow, so small eta is safe.
    """
    cost = np.asarray(cost, dtype=float)
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    if eta <= 0 or tol <= 0:
        raise ValueError("eta and tol must be positive")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost has non-finite entries")
    n_r, n_c = cost.shape

    if warm_start is not None:
        f = np.array(warm_start[0], dtype=float)
        g = np.array(warm_start[1], dtype=float)
    else:
        f = np.zeros(n_r)
        g = np.zeros(n_c)
    u = np.ones(n_r)
    v = np.ones(n_c)
    M = -cost / eta
    kernel = np.exp(M + f[:, None] + g[None, :])

    dual_history: list[float] = []
    converged = False
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        kv = kernel @ v
        u = r / np.maximum(kv, 1e-300)
        ku = kernel.T @ u
        v = c / np.maximum(ku, 1e-300)
        # columns now match exactly; only the row violation remains
        row = u * (kernel @ v)
        err = float(np.abs(row - r).sum())
        if record_dual:
            dual_history.append(
                _dual_objective(f + np.log(u), g + np.log(v), M, r, c)
            )
        if err <= tol:
            converged = True
            break
        if max(u.max(), v.max()) > _ABSORB_THRESHOLD or min(u.min(), v.min()) < 1.0 / _ABSORB_THRESHOLD:
            f = f + np.log(u)
            g = g + np.log(v)
            u = np.ones(n_r)
            v = np.ones(n_c)
            kernel = np.exp(M + f[:, None] + g[None, :])

    log_u = f + np.log(np.maximum(u, 1e-300))
    log_v = g + np.log(np.maximum(v, 1e-300))
    B = np.exp(M + log_u[:, None] + log_v[None, :])
    plan = round_to_polytope(B, r, c)
    state = SinkhornState(
        log_u=log_u,
        log_v=log_v,
        eta=eta,
        projected_cost=cost,
        iterations=it,
        converged=converged,
        marginal_error=err,
        dual_history=dual_history,
    )
    return plan, state


def entropy(pi: np.ndarray) -> float:
    """H(pi) = -<pi, log(pi) - 1> with the 0 log 0 = 0 convention."""
    pi = np.asarray(pi, dtype=float)
    mask = pi > 1e-300
    vals = pi[mask]
    return float(-(vals * (np.log(vals) - 1.0)).sum())


def entropic_objective(plan: TransportPlan, cost: np.ndarray, eta: float) -> float:
    """<cost, pi> - eta * H(pi)."""
    pi = plan.matrix
    cost = np.asarray(cost, dtype=float)
    if cost.shape != pi.shape:
        raise ValueError(f"cost shape {cost.shape} != plan shape {pi.shape}")
    return float((cost * pi).sum()) - eta * entropy(pi)
