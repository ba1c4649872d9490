"""Pure-numpy reference kernels; same contracts as the compiled extension.

These are the hot inner loops of the transport solvers. The compiled module
``otgcl._kernels._core`` implements the identical functions; either backend
may serve a given install, selected in ``otgcl._kernels.__init__``.
"""

from __future__ import annotations

import numpy as np


def sinkhorn_log(cost: np.ndarray, logu: np.ndarray, logv: np.ndarray,
                 eps: float, max_iter: int, tol: float,
                 track_dual: bool = False):
    """Log-domain Sinkhorn for entropic OT.

    Returns (plan, n_iter, violation, dual_history). Row marginals are exact
    after each f-update; ``violation`` is the max absolute column-marginal
    error of the returned plan. ``dual_history`` is populated only when
    ``track_dual`` (used to assert monotone ascent of the entropic dual).
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    u = np.exp(logu)
    v = np.exp(logv)
    f = np.zeros(n)
    g = np.zeros(m)
    neg_c = -cost / eps
    dual_history = []
    violation = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        a = neg_c + g[None, :] / eps
        amax = a.max(axis=1)
        f = eps * (logu - (amax + np.log(np.exp(a - amax[:, None]).sum(axis=1))))
        b = neg_c + f[:, None] / eps
        bmax = b.max(axis=0)
        g = eps * (logv - (bmax + np.log(np.exp(b - bmax[None, :]).sum(axis=0))))
        plan = np.exp(neg_c + f[:, None] / eps + g[None, :] / eps)
        violation = np.abs(plan.sum(axis=0) - v).max()
        row_violation = np.abs(plan.sum(axis=1) - u).max()
        violation = max(violation, row_violation)
        if track_dual:
            dual_history.append(float(f @ u + g @ v - eps * plan.sum()))
        if violation < tol:
            break
    plan = np.exp(neg_c + f[:, None] / eps + g[None, :] / eps)
    return plan, it, float(violation), dual_history


def gw_lin_cost(da: np.ndarray, db: np.ndarray, plan: np.ndarray) -> np.ndarray:
    """Linearized GW cost: C[p, q] = sum_{p', q'} |da[p, p'] - db[q, q']| T[p', q']."""
    da = np.asarray(da, dtype=np.float64)
    db = np.asarray(db, dtype=np.float64)
    plan = np.asarray(plan, dtype=np.float64)
    # quartic tensor |da[p, p'] - db[q, q']| contracted against the plan
    diff = np.abs(da[:, :, None, None] - db[None, None, :, :])  # (p, p', q, q')
    return np.einsum("pRqS,RS->pq", diff, plan, optimize=True)


def gw_value(da: np.ndarray, db: np.ndarray, plan: np.ndarray) -> float:
    """Quartic GW objective sum T[p,q] T[p',q'] |da[p,p'] - db[q,q']|."""
    return float((gw_lin_cost(da, db, plan) * plan).sum())


def gw_grad(da: np.ndarray, db: np.ndarray, plan: np.ndarray):
    """Gradients of ``gw_value`` w.r.t. da and db entries at a frozen plan."""
    da = np.asarray(da, dtype=np.float64)
    db = np.asarray(db, dtype=np.float64)
    plan = np.asarray(plan, dtype=np.float64)
    sign = np.sign(da[:, :, None, None] - db[None, None, :, :])  # (p, p', q, q')
    grad_da = np.einsum("pRqS,pq,RS->pR", sign, plan, plan, optimize=True)
    grad_db = -np.einsum("pRqS,pq,RS->qS", sign, plan, plan, optimize=True)
    return grad_da, grad_db
