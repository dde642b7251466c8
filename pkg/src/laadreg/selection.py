"""Cross-validated strength selection and empirical degrees of freedom."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidArgumentError
from .penalties import PenaltyKind, PenaltySpec, laad_threshold
from .solver import Dataset, _check_weights, _lstsq, _working_design, coordinate_descent, ols_fit

__all__ = ["CvResult", "strength_grid", "kfold_cv", "fold_assignment", "empirical_edf", "edf_path"]


@dataclass(frozen=True)
class CvResult:
    """Cross-validation summary over a descending strength grid."""

    grid: np.ndarray
    cv_rmse_mean: np.ndarray
    cv_rmse_se: np.ndarray
    r_min: float
    r_1se: float
    r_selected: float
    fold_rmse: np.ndarray
    k: int
    seed: int


def _laad_strength_for_threshold(a: float) -> float:
    """Smallest r whose LAAD selection threshold reaches ``a``."""
    if a <= 1.0:
        return a
    # z*(r) increases from 1 at r=1; 2 sqrt(r) - 1 <= z*(r) <= r brackets the root
    hi = ((a + 1.0) / 2.0) ** 2
    if hi <= a:
        return a
    return brentq(lambda r: laad_threshold(r) - a, a, hi, xtol=1e-14, rtol=1e-14)


def _max_strength(data: Dataset, spec: PenaltySpec, weights, scaling: str) -> float:
    """Smallest strength at which ``beta = 0`` on penalized columns is a coordinatewise fixed point."""
    w = _check_weights(weights, data.p)
    W, _, loss_scale = _working_design(data, scaling)
    y = data.response
    exempt = np.flatnonzero(w == 0)
    resid = y.copy()
    if exempt.size:
        resid = y - W[:, exempt] @ _lstsq(W[:, exempt], y)
    g = np.einsum("ij,ij->j", W, W)
    best = 0.0
    for j in np.flatnonzero(w > 0):
        a = abs(float(W[:, j] @ resid)) / g[j]
        curv = loss_scale * g[j]
        if spec.kind is PenaltyKind.LAAD:
            need = _laad_strength_for_threshold(a) * curv / w[j]
        elif spec.kind in (PenaltyKind.SCAD, PenaltyKind.MCP):
            need = a / w[j]
        else:
            need = a * curv / w[j]
        best = max(best, need)
    return best


def strength_grid(
    data: Dataset,
    spec: PenaltySpec,
    weights=None,
    scaling: str = "unit",
    n_values: int = 50,
    ratio: float = 1e-4,
) -> np.ndarray:
    """Descending grid of strengths whose selection thresholds are log-spaced.

    The largest strength is the smallest one for which every penalized
    coefficient is zero at ``beta = 0`` after fitting the exempt columns. The
    thresholds then decrease geometrically to ``ratio`` times the largest.
    For lasso, SCAD, MCP and LAAD with ``r <= 1`` the threshold equals the
    strength, so this is an ordinary log-spaced grid; for LAAD above 1 the
    threshold grows like ``sqrt(r)`` and the strengths are mapped back
    through it. Ridge never zeroes coefficients and reuses the lasso rule.
    """
    if n_values < 2 or not 0 < ratio < 1:
        raise InvalidArgumentError("grid needs n_values >= 2 and 0 < ratio < 1")
    # a small margin keeps the top point clear of the selection jump, where
    # finite-difference edf would be meaningless
    top = _max_strength(data, spec, weights, scaling) * (1.0 + 1e-3)
    if not top > 0:
        raise InvalidArgumentError("response is fully explained by exempt columns; no penalized signal")
    if spec.kind is not PenaltyKind.LAAD or top <= 1.0:
        return np.geomspace(top, top * ratio, n_values)
    thresholds = np.geomspace(laad_threshold(top), laad_threshold(top) * ratio, n_values)
    grid = np.array([_laad_strength_for_threshold(t) for t in thresholds])
    grid[0] = top
    return grid


def fold_assignment(n: int, k: int, seed: int) -> list:
    """Row-index arrays for ``k`` folds from a seeded permutation of ``range(n)``."""
    if k < 2:
        raise InvalidArgumentError(f"k must be >= 2, got {k}")
    if k > n:
        raise InvalidArgumentError(f"k={k} exceeds the number of rows {n}; some fold would be empty")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _fit_predict(train: Dataset, test_X, spec, w, scaling, tol, max_sweeps):
    # columns that vanish on the training rows cannot be estimated; hold them at 0
    keep = np.flatnonzero(np.linalg.norm(train.design, axis=0) > 0)
    coef = np.zeros(train.p)
    if keep.size:
        fit = coordinate_descent(
            train.subset_columns(keep), spec, w[keep], tol=tol, max_sweeps=max_sweeps, scaling=scaling
        )
        coef[keep] = fit.coefficients
    return test_X @ coef


def kfold_cv(
    data: Dataset,
    spec: PenaltySpec,
    weights=None,
    grid: Optional[Sequence[float]] = None,
    k: int = 5,
    seed: int = 0,
    scaling: str = "unit",
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
) -> CvResult:
    """K-fold CV of held-out RMSE with the geometric one-SE rule.

    ``r_1se`` is the largest grid value whose mean RMSE is within one
    standard error (taken at the minimizer) of the minimum, and
    ``r_selected = sqrt(r_min * r_1se)``.
    """
    w = _check_weights(weights, data.p)
    if grid is None:
        grid = strength_grid(data, spec, w, scaling)
    grid = np.sort(np.asarray(grid, dtype=float).ravel())[::-1]
    if grid.size == 0 or np.any(~(grid > 0)) or np.any(~np.isfinite(grid)):
        raise InvalidArgumentError("grid must be a nonempty sequence of positive strengths")
    folds = fold_assignment(data.n, k, seed)
    rmse = np.empty((grid.size, k))
    for f, test in enumerate(folds):
        train_rows = np.setdiff1d(np.arange(data.n), test)
        train = data.subset_rows(train_rows)
        test_X, test_y = data.design[test], data.response[test]
        for g_idx, strength in enumerate(grid):
            pred = _fit_predict(train, test_X, spec.with_strength(strength), w, scaling, tol, max_sweeps)
            rmse[g_idx, f] = math.sqrt(float(np.mean((test_y - pred) ** 2)))
    mean = rmse.mean(axis=1)
    se = rmse.std(axis=1, ddof=1) / math.sqrt(k)
    i_min = int(np.argmin(mean))
    r_min = float(grid[i_min])
    within = np.flatnonzero(mean <= mean[i_min] + se[i_min])
    r_1se = float(grid[within].max())
    return CvResult(
        grid=grid,
        cv_rmse_mean=mean,
        cv_rmse_se=se,
        r_min=r_min,
        r_1se=r_1se,
        r_selected=math.sqrt(r_min * r_1se),
        fold_rmse=rmse,
        k=k,
        seed=seed,
    )


def empirical_edf(
    data: Dataset,
    spec: PenaltySpec,
    weights=None,
    eps: Optional[float] = None,
    scaling: str = "unit",
    tol: float = 1e-13,
    max_sweeps: int = 100_000,
) -> float:
    """Central-difference estimate of ``sum_i d yhat_i / d y_i``.

    Each observation's response is moved by ``+eps`` and ``-eps`` and the
    model refitted from the unperturbed solution. Penalty kind ``none`` is
    fitted by exact least squares, so its value is the hat-matrix trace.
    """
    y = data.response
    if eps is None:
        sd = float(np.std(y, ddof=1)) if data.n > 1 else 0.0
        eps = 1e-4 * (sd if sd > 0 else 1.0)
    if not eps > 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps!r}")
    X = data.design
    if spec.is_null:
        def refit(resp, _init):
            return ols_fit(data.with_response(resp)).coefficients
        base = None
    else:
        w = _check_weights(weights, data.p)

        def refit(resp, init):
            return coordinate_descent(
                data.with_response(resp), spec, w, init=init, tol=tol, max_sweeps=max_sweeps, scaling=scaling
            ).coefficients

        base = refit(y, "ols")
    total = 0.0
    for i in range(data.n):
        up = y.copy()
        up[i] += eps
        down = y.copy()
        down[i] -= eps
        diff = refit(up, base) - refit(down, base)
        total += float(X[i] @ diff) / (2.0 * eps)
    return total


def edf_path(data: Dataset, spec: PenaltySpec, grid, weights=None, scaling: str = "unit", **kwargs) -> np.ndarray:
    """``empirical_edf`` evaluated at each strength of ``grid``."""
    return np.array(
        [empirical_edf(data, spec.with_strength(float(r)), weights, scaling=scaling, **kwargs) for r in grid]
    )
