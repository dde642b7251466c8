"""Compiled coordinate-descent sweep.

The kernel works on a "working" design whose coordinate subproblems are

    0.5 * (t - z_j)**2 + p(t; lam_j)

with ``z_j = W_j . resid / g_j + beta_j``. Callers precompute the per-coordinate
effective strengths ``lam_j`` and, for LAAD, the selection thresholds.
"""

import math

import numpy as np
from numba import njit

KIND_NONE = 0
KIND_RIDGE = 1
KIND_LASSO = 2
KIND_SCAD = 3
KIND_MCP = 4
KIND_LAAD = 5


@njit(cache=True)
def _soft(z, lam):
    a = abs(z) - lam
    if a <= 0.0:
        return 0.0
    return a if z > 0 else -a


@njit(cache=True)
def prox_scalar(z, kind, lam, thr, scad_a, mcp_gamma):
    if lam == 0.0 or kind == KIND_NONE:
        return z
    if kind == KIND_LASSO:
        return _soft(z, lam)
    if kind == KIND_RIDGE:
        return z / (1.0 + lam)
    a = abs(z)
    if kind == KIND_SCAD:
        if a <= 2.0 * lam:
            return _soft(z, lam)
        if a <= scad_a * lam:
            s = 1.0 if z > 0 else -1.0
            return ((scad_a - 1.0) * z - s * scad_a * lam) / (scad_a - 2.0)
        return z
    if kind == KIND_MCP:
        if a <= mcp_gamma * lam:
            return _soft(z, lam) / (1.0 - 1.0 / mcp_gamma)
        return z
    # LAAD
    disc = (a + 1.0) * (a + 1.0) - 4.0 * lam
    if a < thr or disc < 0.0:
        return 0.0
    root = math.sqrt(disc)
    if a >= 1.0:
        t = 0.5 * (a - 1.0 + root)
    else:
        t = 2.0 * (a - lam) / (1.0 - a + root)
    return t if z > 0 else -t


@njit(cache=True)
def penalty_scalar(t, kind, lam, scad_a, mcp_gamma):
    a = abs(t)
    if lam == 0.0 or kind == KIND_NONE:
        return 0.0
    if kind == KIND_LASSO:
        return lam * a
    if kind == KIND_RIDGE:
        return 0.5 * lam * a * a
    if kind == KIND_LAAD:
        return lam * math.log1p(a)
    if kind == KIND_SCAD:
        if a <= lam:
            return lam * a
        if a <= scad_a * lam:
            return (2.0 * scad_a * lam * a - a * a - lam * lam) / (2.0 * (scad_a - 1.0))
        return 0.5 * lam * lam * (scad_a + 1.0)
    if a <= mcp_gamma * lam:
        return lam * a - a * a / (2.0 * mcp_gamma)
    return 0.5 * mcp_gamma * lam * lam


@njit(cache=True)
def working_objective(W, y, beta, g, loss_scale, kind, lam, scad_a, mcp_gamma):
    resid = y - W @ beta
    obj = 0.5 * loss_scale * np.dot(resid, resid)
    for j in range(beta.shape[0]):
        obj += loss_scale * g[j] * penalty_scalar(beta[j], kind, lam[j], scad_a, mcp_gamma)
    return obj


@njit(cache=True)
def cd_solve(W, y, beta0, g, loss_scale, kind, lam, thr, scad_a, mcp_gamma, tol, max_sweeps):
    """Cyclic coordinate descent in ascending column order.

    Returns ``(beta, trace, n_sweeps, converged, failed_sweep)``; ``failed_sweep``
    is -1 unless a non-finite value appeared.
    """
    n, p = W.shape
    beta = beta0.copy()
    trace = np.empty(max_sweeps + 1)
    trace[0] = working_objective(W, y, beta, g, loss_scale, kind, lam, scad_a, mcp_gamma)
    converged = False
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        # a fresh residual each sweep keeps accumulated rounding out of z
        resid = y - W @ beta
        max_change = 0.0
        for j in range(p):
            gj = g[j]
            old = beta[j]
            z = old + np.dot(W[:, j], resid) / gj
            new = prox_scalar(z, kind, lam[j], thr[j], scad_a, mcp_gamma)
            if not math.isfinite(new):
                return beta, trace[:sweep], sweep, False, sweep
            diff = new - old
            if diff != 0.0:
                for i in range(n):
                    resid[i] -= W[i, j] * diff
                beta[j] = new
                if abs(diff) > max_change:
                    max_change = abs(diff)
        obj = working_objective(W, y, beta, g, loss_scale, kind, lam, scad_a, mcp_gamma)
        if not math.isfinite(obj):
            return beta, trace[:sweep], sweep, False, sweep
        trace[sweep] = obj
        if max_change <= tol:
            converged = True
            break
    return beta, trace[: sweep + 1], sweep, converged, -1


@njit(cache=True)
def _gram_objective(G, b, yy, beta, g, loss_scale, kind, lam, scad_a, mcp_gamma):
    q = b - G @ beta
    rss = yy - np.dot(beta, b) - np.dot(beta, q)
    if rss < 0.0:
        rss = 0.0
    obj = 0.5 * loss_scale * rss
    for j in range(beta.shape[0]):
        obj += loss_scale * g[j] * penalty_scalar(beta[j], kind, lam[j], scad_a, mcp_gamma)
    return obj


@njit(cache=True)
def cd_solve_gram(G, b, yy, beta0, loss_scale, kind, lam, thr, scad_a, mcp_gamma, tol, max_sweeps):
    """Covariance-form variant of :func:`cd_solve` for tall designs.

    Works with ``G = W'W``, ``b = W'y`` and ``yy = y'y`` so that each
    coordinate step costs O(p) instead of O(n). The objective is evaluated
    from the same quantities and so carries rounding of order ``eps * yy``.
    """
    p = G.shape[0]
    g = np.empty(p)
    for j in range(p):
        g[j] = G[j, j]
    beta = beta0.copy()
    trace = np.empty(max_sweeps + 1)
    trace[0] = _gram_objective(G, b, yy, beta, g, loss_scale, kind, lam, scad_a, mcp_gamma)
    converged = False
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        q = b - G @ beta
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            z = old + q[j] / g[j]
            new = prox_scalar(z, kind, lam[j], thr[j], scad_a, mcp_gamma)
            if not math.isfinite(new):
                return beta, trace[:sweep], sweep, False, sweep
            diff = new - old
            if diff != 0.0:
                for k in range(p):
                    q[k] -= G[k, j] * diff
                beta[j] = new
                if abs(diff) > max_change:
                    max_change = abs(diff)
        obj = _gram_objective(G, b, yy, beta, g, loss_scale, kind, lam, scad_a, mcp_gamma)
        if not math.isfinite(obj):
            return beta, trace[:sweep], sweep, False, sweep
        trace[sweep] = obj
        if max_change <= tol:
            converged = True
            break
    return beta, trace[: sweep + 1], sweep, converged, -1
