"""Simulation benchmark with interaction effects.

Nine normal covariates generate a response through main effects and four
pairwise interactions. Competing estimators see all 9 main effects plus the
36 pairwise products (lexicographic order) and are scored on coefficient
bias, RMSE and L1 / L0 distance from the truth.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import InvalidArgumentError, LaadError
from .penalties import PenaltySpec
from .selection import kfold_cv
from .solver import Dataset, coordinate_descent, forward_bic, ols_fit

__all__ = [
    "MODELS",
    "SimConfig",
    "SimReport",
    "column_names",
    "true_coefficients",
    "gen_sim_data",
    "fit_model",
    "run_sim_study",
    "qq_residuals",
]

MODELS = ("full", "reduced", "best", "lasso", "mcp", "scad", "laad")

# (mean, variance) of X1..X9
_MEANS = np.array([5.0, -2.0, 1.0, 3.0, 0.0, 0.0, -3.0, 2.0, 3.0])
_VARIANCES = np.array([1.0, 1.0, 4.0, 4.0, 4.0, 9.0, 4.0, 1.0, 1.0])
_MAIN = np.array([-1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0])
_INTERACTIONS = {(1, 6): -10.0, (2, 3): 1.0, (3, 4): 0.1, (4, 6): -0.01}
_PAIRS = list(itertools.combinations(range(1, 10), 2))


def column_names() -> List[str]:
    return [f"x{k}" for k in range(1, 10)] + [f"x{a}:x{b}" for a, b in _PAIRS]


def true_coefficients() -> np.ndarray:
    beta = np.zeros(9 + len(_PAIRS))
    beta[:9] = _MAIN
    for pair, value in _INTERACTIONS.items():
        beta[9 + _PAIRS.index(pair)] = value
    return beta


def _expand(X: np.ndarray) -> np.ndarray:
    inter = np.column_stack([X[:, a - 1] * X[:, b - 1] for a, b in _PAIRS])
    return np.hstack([X, inter])


def gen_sim_data(n: int, seed=0, noise: bool = True) -> Tuple[Dataset, np.ndarray]:
    """Draw one data set of size ``n``.

    Returns the 45-column design (9 mains then 36 products) with its response
    and the true coefficient vector. ``noise=False`` drops the error term.
    """
    if int(n) < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = _MEANS + np.sqrt(_VARIANCES) * rng.standard_normal((int(n), 9))
    eps = rng.standard_normal(int(n))
    design = _expand(X)
    beta = true_coefficients()
    y = design @ beta + (eps if noise else 0.0)
    return Dataset(design, y, column_names()), beta


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    reps: int = 100
    seed: int = 0
    models: Tuple[str, ...] = MODELS
    k: int = 5

    def __post_init__(self):
        if self.n < 50:
            raise InvalidArgumentError(f"n must be >= 50, got {self.n}")
        if self.reps < 1:
            raise InvalidArgumentError(f"reps must be >= 1, got {self.reps}")
        models = tuple(str(m).lower() for m in self.models)
        unknown = [m for m in models if m not in MODELS]
        if unknown:
            raise InvalidArgumentError(f"unknown models {unknown}; expected a subset of {MODELS}")
        object.__setattr__(self, "models", models)


@dataclass
class SimReport:
    config: SimConfig
    coef_names: List[str]
    truth: np.ndarray
    bias: Dict[str, np.ndarray]
    rmse: Dict[str, np.ndarray]
    mean_l1_diff: Dict[str, float]
    mean_l0_diff: Dict[str, float]
    avg_runtime_seconds: Dict[str, float]
    failures: Dict[str, int] = field(default_factory=dict)
    estimates: Dict[str, np.ndarray] = field(default_factory=dict)


def _fold_seed(seed: int, rep: int, model: str) -> int:
    return int(np.random.SeedSequence([seed, rep, MODELS.index(model)]).generate_state(1)[0])


def fit_model(data: Dataset, model: str, k: int = 5, cv_seed: int = 0) -> np.ndarray:
    """Coefficient estimate of one competing model on a simulated data set."""
    p = data.p
    if model == "full":
        return ols_fit(data).coefficients
    if model == "reduced":
        coef = np.zeros(p)
        coef[:9] = ols_fit(data.subset_columns(range(9))).coefficients
        return coef
    if model == "best":
        return forward_bic(data).coefficients
    spec = PenaltySpec(model)
    cv = kfold_cv(data, spec, k=k, seed=cv_seed, scaling="unit")
    return coordinate_descent(data, spec.with_strength(cv.r_selected), scaling="unit").coefficients


def run_sim_study(config: SimConfig) -> SimReport:
    """Fit every configured model on ``reps`` independent data sets."""
    truth = true_coefficients()
    est = {m: np.full((config.reps, truth.size), np.nan) for m in config.models}
    runtime = {m: 0.0 for m in config.models}
    failures = {m: 0 for m in config.models}
    for rep in range(config.reps):
        data, _ = gen_sim_data(config.n, np.random.default_rng([config.seed, rep]))
        for m in config.models:
            t0 = time.perf_counter()
            try:
                coef = fit_model(data, m, config.k, _fold_seed(config.seed, rep, m))
            except (LaadError, ArithmeticError):
                failures[m] += 1
                continue
            runtime[m] += time.perf_counter() - t0
            est[m][rep] = coef
    bias, rmse, l1, l0, avg_rt = {}, {}, {}, {}, {}
    for m in config.models:
        ok = est[m][np.all(np.isfinite(est[m]), axis=1)]
        err = ok - truth
        bias[m] = err.mean(axis=0)
        rmse[m] = np.sqrt((err**2).mean(axis=0))
        l1[m] = float(np.abs(err).sum(axis=1).mean())
        l0[m] = float(((truth == 0) != (ok == 0)).sum(axis=1).mean())
        avg_rt[m] = runtime[m] / max(ok.shape[0], 1)
    return SimReport(config, column_names(), truth, bias, rmse, l1, l0, avg_rt, failures, est)


def qq_residuals(n: int = 1000, seed=0) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Normal QQ coordinates of standardized OLS residuals.

    ``"reduced"`` uses the nine main effects only and ``"true"`` adds the
    four active interactions. Values are ``(theoretical, sample)`` quantiles.
    """
    data, beta = gen_sim_data(n, seed)
    active = [j for j in range(data.p) if j < 9 or beta[j] != 0]
    out = {}
    for name, cols in (("reduced", list(range(9))), ("true", active)):
        fit = ols_fit(data.subset_columns(cols))
        resid = data.response - fit.fitted
        z = np.sort((resid - resid.mean()) / resid.std(ddof=1))
        probs = (np.arange(1, n + 1) - 0.5) / n
        out[name] = (stats.norm.ppf(probs), z)
    return out
