"""Penalized least squares by cyclic coordinate descent, plus OLS and forward BIC.

Columns are rescaled before fitting and coefficients are reported on the
original scale. Three working scales are supported:

``"unit"``
    columns divided by their Euclidean norm, loss ``0.5 * RSS``. This is the
    setting in which every coordinate step is exactly a prox evaluation.
``"mean_square"``
    columns rescaled to mean square one, loss ``RSS / (2 n)`` (the glmnet
    convention). Coordinate steps are again plain prox evaluations.
``"none"``
    original columns, loss ``0.5 * RSS``. The coordinate step becomes
    ``prox(z, strength / ||X_j||^2)``, which is exact only for penalties that
    scale linearly (ridge, lasso, LAAD).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import (
    DegenerateColumnError,
    InvalidArgumentError,
    NumericalFailureError,
    RankDeficiencyError,
)
from .penalties import PenaltyKind, PenaltySpec, laad_threshold, prox

__all__ = [
    "Dataset",
    "FitResult",
    "normalize_columns",
    "coordinate_descent",
    "ols_fit",
    "forward_bic",
    "fixed_point_residual",
    "SCALINGS",
]

SCALINGS = ("unit", "mean_square", "none")

_KIND_CODES = {
    PenaltyKind.NONE: _kernels.KIND_NONE,
    PenaltyKind.RIDGE: _kernels.KIND_RIDGE,
    PenaltyKind.LASSO: _kernels.KIND_LASSO,
    PenaltyKind.SCAD: _kernels.KIND_SCAD,
    PenaltyKind.MCP: _kernels.KIND_MCP,
    PenaltyKind.LAAD: _kernels.KIND_LAAD,
}


@dataclass(frozen=True)
class Dataset:
    """Design matrix, response and column names."""

    design: np.ndarray
    response: np.ndarray
    column_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.design, dtype=float)
        y = np.array(self.response, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise InvalidArgumentError("design must be a 2-d array")
        n, p = X.shape
        if n < 1 or p < 1:
            raise InvalidArgumentError(f"design must have at least one row and column, got shape {X.shape}")
        if y.shape[0] != n:
            raise InvalidArgumentError(f"response length {y.shape[0]} does not match {n} design rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("design and response must be finite")
        names = tuple(str(c) for c in self.column_names) if len(self.column_names) else tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise InvalidArgumentError(f"{len(names)} column names given for {p} columns")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def with_response(self, response) -> "Dataset":
        return Dataset(self.design, response, self.column_names)

    def subset_rows(self, rows) -> "Dataset":
        return Dataset(self.design[rows], self.response[rows], self.column_names)

    def subset_columns(self, cols) -> "Dataset":
        cols = list(cols)
        return Dataset(self.design[:, cols], self.response, [self.column_names[j] for j in cols])


@dataclass
class FitResult:
    """Outcome of a regression fit.

    Attributes
    ----------
    coefficients : ndarray
        Coefficients on the original column scale.
    objective_trace : ndarray
        Working-scale penalized objective before the first sweep and after
        each sweep. Empty for closed-form fits.
    sigma2_hat : float
        Residual variance, ``RSS / n`` or ``RSS / (n - k)``.
    n_iter : int
        Number of completed sweeps.
    converged : bool
    nonzero_mask : ndarray of bool
    strength_warning : bool
        True for LAAD fits where some effective strength exceeds 1, outside
        the range with a convergence guarantee.
    """

    coefficients: np.ndarray
    objective_trace: np.ndarray
    sigma2_hat: float
    n_iter: int
    converged: bool
    nonzero_mask: np.ndarray
    fitted: np.ndarray
    rss: float
    spec: PenaltySpec = field(default_factory=PenaltySpec)
    weights: Optional[np.ndarray] = None
    scaling: str = "unit"
    column_scale: Optional[np.ndarray] = None
    working_coefficients: Optional[np.ndarray] = None
    strength_warning: bool = False

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.nonzero_mask))


def _sigma2(rss: float, n: int, k: int, sigma2: str) -> float:
    if sigma2 == "mle":
        return rss / n
    if sigma2 == "unbiased":
        if n - k <= 0:
            return float("nan")
        return rss / (n - k)
    raise InvalidArgumentError(f"sigma2 must be 'mle' or 'unbiased', got {sigma2!r}")


def normalize_columns(data: Dataset):
    """Divide each column by its Euclidean norm.

    Returns
    -------
    (Dataset, ndarray)
        The normalized data and the column norms. Original-scale coefficients
        are ``beta_j = beta_tilde_j / scale_j``.
    """
    norms = np.linalg.norm(data.design, axis=0)
    for j, c in enumerate(norms):
        if c == 0.0:
            raise DegenerateColumnError(data.column_names[j])
    return Dataset(data.design / norms, data.response, data.column_names), norms


def _working_design(data: Dataset, scaling: str):
    """Working design ``W = X * s`` with per-column multipliers ``s`` and the loss scale."""
    if scaling not in SCALINGS:
        raise InvalidArgumentError(f"scaling must be one of {SCALINGS}, got {scaling!r}")
    norms = np.linalg.norm(data.design, axis=0)
    for j, c in enumerate(norms):
        if c == 0.0:
            raise DegenerateColumnError(data.column_names[j])
    n = data.n
    if scaling == "unit":
        s = 1.0 / norms
        loss_scale = 1.0
    elif scaling == "mean_square":
        s = math.sqrt(n) / norms
        loss_scale = 1.0 / n
    else:
        s = np.ones_like(norms)
        loss_scale = 1.0
    W = np.asfortranarray(data.design * s)
    return W, s, loss_scale


def _check_weights(weights, p):
    if weights is None:
        return np.ones(p)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != p:
        raise InvalidArgumentError(f"weights length {w.shape[0]} does not match {p} columns")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgumentError("weights must be finite and nonnegative")
    return w


def _effective_strengths(spec: PenaltySpec, w, g, loss_scale):
    """Strengths of the per-coordinate prox problems and LAAD thresholds."""
    curvature = loss_scale * g
    if spec.kind in (PenaltyKind.SCAD, PenaltyKind.MCP) and np.any(np.abs(curvature - 1.0) > 1e-8):
        raise InvalidArgumentError(
            f"{spec.kind.value} requires a normalized working scale ('unit' or 'mean_square')"
        )
    if spec.kind in (PenaltyKind.SCAD, PenaltyKind.MCP):
        lam = spec.strength * w
    else:
        lam = spec.strength * w / curvature
    if spec.kind is PenaltyKind.NONE:
        lam = np.zeros_like(w)
    thr = np.zeros_like(lam)
    if spec.kind is PenaltyKind.LAAD:
        for j, r in enumerate(lam):
            if r > 0:
                thr[j] = laad_threshold(float(r))
    return lam, thr


def _lstsq(X, y):
    return scipy.linalg.lstsq(X, y, lapack_driver="gelsd")[0]


def coordinate_descent(
    data: Dataset,
    spec: PenaltySpec,
    weights: Optional[Sequence[float]] = None,
    init="ols",
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
    scaling: str = "unit",
    sigma2: str = "mle",
    method: str = "auto",
) -> FitResult:
    """Minimize ``loss(y - X beta) + sum_j w_j p(beta_j)`` by cyclic coordinate descent.

    Parameters
    ----------
    data : Dataset
    spec : PenaltySpec
    weights : sequence of float, optional
        Per-coefficient penalty multipliers; 0 exempts a coefficient.
    init : "ols", "zeros" or array
        Starting point on the original coefficient scale. ``"ols"`` uses the
        least-squares solution (minimum-norm when the design is singular).
    tol : float
        Stop when the largest working-scale coefficient change in a sweep is
        at most ``tol``.
    max_sweeps : int
    scaling : {"unit", "mean_square", "none"}
        Working scale on which the penalty acts; see the module docstring.
    sigma2 : {"mle", "unbiased"}
        ``RSS / n`` or ``RSS / (n - k)`` with ``k`` the nonzero count.
    method : {"auto", "residual", "gram"}
        ``"residual"`` updates an explicit residual vector; ``"gram"`` works
        with ``X'X`` and is faster when ``n`` is well above ``p``. ``"auto"``
        picks ``"gram"`` when ``n > max(2 p, 100)``.

    Returns
    -------
    FitResult
    """
    if not (tol > 0 and math.isfinite(tol)):
        raise InvalidArgumentError(f"tol must be positive, got {tol!r}")
    if int(max_sweeps) < 1:
        raise InvalidArgumentError(f"max_sweeps must be >= 1, got {max_sweeps!r}")
    w = _check_weights(weights, data.p)
    W, s, loss_scale = _working_design(data, scaling)
    y = np.ascontiguousarray(data.response)
    g = np.einsum("ij,ij->j", W, W)
    lam, thr = _effective_strengths(spec, w, g, loss_scale)

    if isinstance(init, str):
        if init == "ols":
            beta0 = _lstsq(W, y)
        elif init == "zeros":
            beta0 = np.zeros(data.p)
        else:
            raise InvalidArgumentError(f"init must be 'ols', 'zeros' or an array, got {init!r}")
    else:
        b = np.asarray(init, dtype=float).ravel()
        if b.shape[0] != data.p or not np.all(np.isfinite(b)):
            raise InvalidArgumentError(f"init must be a finite array of length {data.p}")
        beta0 = b / s

    if method == "auto":
        method = "gram" if data.n > max(2 * data.p, 100) else "residual"
    beta0 = np.ascontiguousarray(beta0, dtype=float)
    code = _KIND_CODES[spec.kind]
    if method == "residual":
        beta_w, trace, n_iter, converged, failed = _kernels.cd_solve(
            W, y, beta0, g, loss_scale, code, lam, thr, spec.scad_a, spec.mcp_gamma, float(tol), int(max_sweeps)
        )
    elif method == "gram":
        G = np.ascontiguousarray(W.T @ W)
        beta_w, trace, n_iter, converged, failed = _kernels.cd_solve_gram(
            G, W.T @ y, float(y @ y), beta0, loss_scale, code, lam, thr, spec.scad_a, spec.mcp_gamma,
            float(tol), int(max_sweeps),
        )
    else:
        raise InvalidArgumentError(f"method must be 'auto', 'residual' or 'gram', got {method!r}")
    if failed >= 0:
        raise NumericalFailureError(int(failed))

    coef = beta_w * s
    fitted = W @ beta_w
    rss = float(np.sum((y - fitted) ** 2))
    nonzero = coef != 0.0
    return FitResult(
        coefficients=coef,
        objective_trace=np.asarray(trace),
        sigma2_hat=_sigma2(rss, data.n, int(nonzero.sum()), sigma2),
        n_iter=int(n_iter),
        converged=bool(converged),
        nonzero_mask=nonzero,
        fitted=fitted,
        rss=rss,
        spec=spec,
        weights=w,
        scaling=scaling,
        column_scale=s,
        working_coefficients=beta_w,
        strength_warning=bool(spec.kind is PenaltyKind.LAAD and np.any(lam > 1.0)),
    )


def fixed_point_residual(data: Dataset, fit: FitResult) -> float:
    """Largest ``|beta_j - prox(z_j)|`` on the working scale at the reported solution."""
    W, s, loss_scale = _working_design(data, fit.scaling)
    g = np.einsum("ij,ij->j", W, W)
    lam, _ = _effective_strengths(fit.spec, fit.weights, g, loss_scale)
    beta = fit.working_coefficients
    resid = data.response - W @ beta
    worst = 0.0
    for j in range(data.p):
        z = beta[j] + float(W[:, j] @ resid) / g[j]
        target = prox(z, fit.spec.with_strength(float(lam[j]))) if lam[j] > 0 else z
        worst = max(worst, abs(target - beta[j]))
    return worst


def _rank_check(X, names, rtol=None):
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return
    if rtol is None:
        rtol = max(X.shape) * np.finfo(float).eps
    rank = int(np.sum(diag > rtol * diag[0]))
    if rank < X.shape[1]:
        raise RankDeficiencyError([names[j] for j in sorted(piv[rank:])])


def ols_fit(data: Dataset, sigma2: str = "mle") -> FitResult:
    """Exact least squares.

    Raises
    ------
    RankDeficiencyError
        If the design does not have full column rank; the dependent columns
        are those the pivoted QR places last.
    """
    X, y = data.design, data.response
    _rank_check(X, data.column_names)
    coef = _lstsq(X, y)
    fitted = X @ coef
    rss = float(np.sum((y - fitted) ** 2))
    return FitResult(
        coefficients=coef,
        objective_trace=np.array([0.5 * rss]),
        sigma2_hat=_sigma2(rss, data.n, data.p, sigma2),
        n_iter=0,
        converged=True,
        nonzero_mask=coef != 0.0,
        fitted=fitted,
        rss=rss,
        weights=np.zeros(data.p),
        scaling="none",
        column_scale=np.ones(data.p),
        working_coefficients=coef,
    )


def _subset_rss(X, y, cols):
    if not cols:
        return float(y @ y), np.zeros(0)
    b = _lstsq(X[:, cols], y)
    r = y - X[:, cols] @ b
    return float(r @ r), b


def forward_bic(data: Dataset, always_in: Sequence[int] = (), sigma2: str = "mle") -> FitResult:
    """Greedy forward selection scored by ``n log(RSS/n) + k log(n)``.

    Starts from ``always_in`` and repeatedly adds the column that most reduces
    RSS, stopping as soon as BIC fails to decrease. The result is the OLS refit
    on the selected columns with zeros elsewhere.
    """
    n, p = data.n, data.p
    X, y = data.design, data.response
    selected = []
    for j in always_in:
        j = int(j)
        if not 0 <= j < p:
            raise InvalidArgumentError(f"always_in index {j} out of range for {p} columns")
        if j not in selected:
            selected.append(j)
    if selected:
        _rank_check(X[:, selected], [data.column_names[j] for j in selected])

    def bic(rss, k):
        return n * math.log(max(rss, np.finfo(float).tiny) / n) + k * math.log(n)

    rss, _ = _subset_rss(X, y, selected)
    current = bic(rss, len(selected))
    while len(selected) < min(p, n):
        best_j, best_rss = None, None
        for j in range(p):
            if j in selected:
                continue
            cand = selected + [j]
            if np.linalg.matrix_rank(X[:, cand]) < len(cand):
                continue
            r, _ = _subset_rss(X, y, cand)
            if best_rss is None or r < best_rss:
                best_j, best_rss = j, r
        if best_j is None:
            break
        score = bic(best_rss, len(selected) + 1)
        if score >= current:
            break
        selected.append(best_j)
        current = score

    coef = np.zeros(p)
    cols = sorted(selected)
    _, b = _subset_rss(X, y, cols)
    coef[cols] = b
    fitted = X @ coef
    rss = float(np.sum((y - fitted) ** 2))
    return FitResult(
        coefficients=coef,
        objective_trace=np.array([0.5 * rss]),
        sigma2_hat=_sigma2(rss, n, len(cols), sigma2),
        n_iter=len(cols),
        converged=True,
        nonzero_mask=coef != 0.0,
        fitted=fitted,
        rss=rss,
        weights=np.zeros(p),
        scaling="none",
        column_scale=np.ones(p),
        working_coefficients=coef,
    )
