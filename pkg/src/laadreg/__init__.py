"""LAAD-penalized least squares and penalized loss-development reserving."""

from .errors import *  # noqa: F401,F403
from .penalties import (
    PenaltyKind,
    PenaltySpec,
    ProxResult,
    laad_delta,
    laad_prox,
    laad_threshold,
    oracle_prox,
    penalty_value,
    prox,
)
from .solver import (
    Dataset,
    FitResult,
    coordinate_descent,
    fixed_point_residual,
    forward_bic,
    normalize_columns,
    ols_fit,
)

__version__ = "0.1.0"
