"""Parametric bootstrap of next-calendar-year unpaid losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import BootstrapError, InvalidArgumentError, LaadError
from .reserving import DevFactorTable, LossTriangle, ReserveDesign, fit_reserving, predict_next_diagonal

__all__ = ["BootstrapSummary", "bootstrap_reserve", "replicate_rng", "MAX_FAILURE_RATE"]

MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class BootstrapSummary:
    """Bootstrap distribution of one line's next-diagonal unpaid loss."""

    line: str
    replicates: np.ndarray
    mean: float
    lower95: float
    upper95: float
    seed: int
    n_requested: int
    n_failed: int
    point_estimate: float

    def contains(self, value: float) -> bool:
        return self.lower95 <= value <= self.upper95


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent generator for one replicate, so results do not depend on execution order."""
    return np.random.default_rng([int(seed), int(replicate)])


def bootstrap_reserve(
    design: ReserveDesign,
    triangles: Sequence[LossTriangle],
    model="laad",
    strength: Optional[float] = None,
    S: int = 1000,
    seed: int = 0,
    base: Optional[DevFactorTable] = None,
    **fit_kwargs,
) -> Dict[str, BootstrapSummary]:
    """Simulate responses from the fitted lognormal link-ratio model and refit.

    Each replicate draws ``C* ~ N(fitted, sigma2)`` at every training
    observation, refits the same model at the same penalty strength, and
    records ``sum_i (exp(zeta*_{j+1} + sigma2*/2) - 1) * Y[i, j]`` per line,
    with ``Y[i, j]`` the latest observed cumulative loss.

    Parameters
    ----------
    design : ReserveDesign
    triangles : sequence of LossTriangle
        Training triangles supplying the latest diagonal.
    model : str
    strength : float, optional
        Fixed strength for penalized models. When omitted it is taken from
        ``base`` (which may itself have been chosen by CV).
    S : int
        Number of replicates.
    seed : int
    base : DevFactorTable, optional
        Base fit; computed from ``design`` when omitted.
    **fit_kwargs
        Passed to :func:`laadreg.reserving.fit_reserving`.

    Raises
    ------
    BootstrapError
        If more than 5% of replicate fits fail.
    """
    if int(S) < 1:
        raise InvalidArgumentError(f"S must be >= 1, got {S!r}")
    S = int(S)
    if base is None:
        base = fit_reserving(design, model, strength=strength, **fit_kwargs)
    if base.model.is_penalized:
        strength = base.strength
    point = predict_next_diagonal(triangles, base).totals
    mu = np.asarray(base.fitted, dtype=float)
    sd = math.sqrt(max(base.sigma2_hat, 0.0))
    lines = [t.line for t in triangles]
    draws = {line: np.full(S, np.nan) for line in lines}
    failures = []
    for s in range(S):
        sim = mu + sd * replicate_rng(seed, s).standard_normal(mu.shape[0])
        try:
            refit = fit_reserving(design.with_response(sim), base.model, strength=strength, **fit_kwargs)
            totals = predict_next_diagonal(triangles, refit).totals
        except (LaadError, ArithmeticError) as exc:
            failures.append((s, str(exc)))
            continue
        if not all(math.isfinite(v) for v in totals.values()):
            failures.append((s, "non-finite prediction"))
            continue
        for line in lines:
            draws[line][s] = totals[line]
    if len(failures) > MAX_FAILURE_RATE * S:
        first = "; ".join(f"replicate {s}: {msg}" for s, msg in failures[:3])
        raise BootstrapError(f"{len(failures)} of {S} replicate fits failed ({first})")
    out = {}
    for line in lines:
        rep = draws[line][np.isfinite(draws[line])]
        lo, hi = np.percentile(rep, [2.5, 97.5])
        rep.setflags(write=False)
        out[line] = BootstrapSummary(
            line=line,
            replicates=rep,
            mean=float(rep.mean()),
            lower95=float(lo),
            upper95=float(hi),
            seed=int(seed),
            n_requested=S,
            n_failed=len(failures),
            point_estimate=float(point[line]),
        )
    return out
