"""Penalty functions and their univariate minimizers.

Every penalty ``p`` here is applied coordinate-wise and the proximal map is

    prox(z) = argmin_theta 0.5 * (z - theta)**2 + p(theta)

which is the building block of coordinate descent on unit-norm columns.
The LAAD penalty is ``r * log(1 + |theta|)``; its minimizer has a closed
form with a selection threshold that equals ``r`` when ``r <= 1`` and is
the root ``z*(r)`` of the objective gap ``laad_delta`` otherwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidArgumentError

__all__ = [
    "PenaltyKind",
    "PenaltySpec",
    "ProxResult",
    "laad_prox",
    "laad_delta",
    "laad_threshold",
    "prox",
    "penalty",
    "penalty_value",
    "penalty_derivative",
    "oracle_prox",
    "selection_threshold",
]

_DELTA_TOL = 1e-12
_BISECT_MAX_ITER = 200
_EPS = float(np.finfo(float).eps)


class PenaltyKind(str, enum.Enum):
    NONE = "none"
    RIDGE = "ridge"
    LASSO = "lasso"
    SCAD = "scad"
    MCP = "mcp"
    LAAD = "laad"

    @classmethod
    def parse(cls, value) -> "PenaltyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise InvalidArgumentError(f"unknown penalty kind {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family plus tuning parameters.

    ``strength`` is ``r`` for LAAD and ``lambda`` for the other families.
    Ridge uses ``0.5 * strength * theta**2`` so that its prox is
    ``z / (1 + strength)``.
    """

    kind: PenaltyKind = PenaltyKind.NONE
    strength: float = 0.0
    scad_a: float = 3.7
    mcp_gamma: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind.parse(self.kind))
        strength = float(self.strength)
        if not math.isfinite(strength) or strength < 0:
            raise InvalidArgumentError(f"strength must be finite and >= 0, got {self.strength!r}")
        object.__setattr__(self, "strength", strength)
        if self.kind is PenaltyKind.SCAD and not self.scad_a > 2:
            raise InvalidArgumentError(f"SCAD requires a > 2, got {self.scad_a!r}")
        if self.kind is PenaltyKind.MCP and not self.mcp_gamma > 1:
            raise InvalidArgumentError(f"MCP requires gamma > 1, got {self.mcp_gamma!r}")

    def with_strength(self, strength: float) -> "PenaltySpec":
        return replace(self, strength=strength)

    @property
    def is_null(self) -> bool:
        return self.kind is PenaltyKind.NONE or self.strength == 0.0


@dataclass(frozen=True)
class ProxResult:
    theta_hat: float
    interior_stationary: bool
    delta_value: Optional[float] = None


def _check_finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
    return value


def _discriminant(a: float, r: float) -> float:
    """``(a + 1)**2 - 4 r``, with rounding-level negatives treated as zero."""
    d = (a + 1.0) ** 2 - 4.0 * r
    if d < 0 and -d <= 8.0 * _EPS * (a + 1.0) ** 2:
        return 0.0
    return d


def _laad_interior(a: float, r: float) -> float:
    """Larger root of theta**2 + (1 - a) theta + (r - a) = 0 for a >= 0.

    Both branches are algebraically equal; the second avoids cancellation
    when ``a < 1``.
    """
    root = math.sqrt(max(_discriminant(a, r), 0.0))
    if a >= 1.0:
        return 0.5 * (a - 1.0 + root)
    return 2.0 * (a - r) / (1.0 - a + root)


def _delta_at(a: float, r: float) -> float:
    theta = _laad_interior(a, r)
    return 0.5 * theta * theta - theta * a + r * math.log1p(theta)


def laad_delta(z: float, r: float) -> float:
    """Objective gap between the interior stationary point and zero.

    Returns ``l(theta*) - l(0)`` for ``l(t) = 0.5 (|z| - t)^2 + r log(1 + t)``.
    Raises :class:`DomainError` when ``theta*`` is not real.
    """
    z = _check_finite("z", z)
    r = _check_finite("r", r)
    if r <= 0:
        raise InvalidArgumentError(f"r must be positive, got {r!r}")
    a = abs(z)
    if _discriminant(a, r) < 0:
        raise DomainError(f"interior stationary point is not real for z={z!r}, r={r!r}")
    return _delta_at(a, r)


def _threshold_uncached(r: float) -> float:
    lo = 2.0 * math.sqrt(r) - 1.0
    hi = r
    # Delta is decreasing on [lo, hi]: positive at lo, negative at hi.
    mid = 0.5 * (lo + hi)
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        value = _delta_at(mid, r)
        if abs(value) <= _DELTA_TOL or mid in (lo, hi):
            break
        if value > 0:
            lo = mid
        else:
            hi = mid
    return mid


_threshold_cache: dict = {}


def laad_threshold(r: float) -> float:
    """Selection threshold of the LAAD prox.

    For ``r <= 1`` this is ``r``. For ``r > 1`` it is the unique root of
    ``laad_delta(., r)`` on ``[2 sqrt(r) - 1, r]``, found by bisection.
    """
    r = _check_finite("r", r)
    if r <= 0:
        raise InvalidArgumentError(f"r must be positive, got {r!r}")
    if r <= 1.0:
        return r
    hit = _threshold_cache.get(r)
    if hit is None:
        if len(_threshold_cache) > 100_000:
            _threshold_cache.clear()
        hit = _threshold_cache[r] = _threshold_uncached(r)
    return hit


def laad_prox(z: float, r: float) -> ProxResult:
    """Global minimizer of ``0.5 (z - t)^2 + r log(1 + |t|)``."""
    z = _check_finite("z", z)
    r = _check_finite("r", r)
    if r <= 0:
        raise InvalidArgumentError(f"r must be positive, got {r!r}")
    a = abs(z)
    delta = None
    if r > 1.0 and _discriminant(a, r) >= 0:
        delta = _delta_at(a, r)
    if a < laad_threshold(r) or _discriminant(a, r) < 0:
        return ProxResult(0.0, False, delta)
    # adding 0.0 turns a signed zero root into +0.0
    theta = math.copysign(_laad_interior(a, r), z) + 0.0
    return ProxResult(theta, True, delta)


def _soft(z: float, lam: float) -> float:
    return math.copysign(max(abs(z) - lam, 0.0), z) + 0.0


def prox(z: float, spec: PenaltySpec) -> float:
    """Univariate minimizer of ``0.5 (z - t)^2 + p(t; spec)``."""
    z = _check_finite("z", z)
    kind, lam = spec.kind, spec.strength
    if kind is PenaltyKind.NONE or lam == 0.0:
        return z
    if kind is PenaltyKind.LASSO:
        return _soft(z, lam)
    if kind is PenaltyKind.RIDGE:
        return z / (1.0 + lam)
    if kind is PenaltyKind.SCAD:
        a = spec.scad_a
        if abs(z) <= 2.0 * lam:
            return _soft(z, lam)
        if abs(z) <= a * lam:
            return ((a - 1.0) * z - math.copysign(a * lam, z)) / (a - 2.0)
        return z
    if kind is PenaltyKind.MCP:
        g = spec.mcp_gamma
        if abs(z) <= g * lam:
            return _soft(z, lam) / (1.0 - 1.0 / g)
        return z
    return laad_prox(z, lam).theta_hat


def penalty(theta, spec: PenaltySpec):
    """Elementwise penalty ``p(theta; spec)``; accepts scalars or arrays."""
    t = np.abs(np.asarray(theta, dtype=float))
    kind, lam = spec.kind, spec.strength
    if kind is PenaltyKind.NONE:
        out = np.zeros_like(t)
    elif kind is PenaltyKind.LASSO:
        out = lam * t
    elif kind is PenaltyKind.RIDGE:
        out = 0.5 * lam * t * t
    elif kind is PenaltyKind.LAAD:
        out = lam * np.log1p(t)
    elif kind is PenaltyKind.SCAD:
        a = spec.scad_a
        out = np.where(
            t <= lam,
            lam * t,
            np.where(
                t <= a * lam,
                (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0)),
                0.5 * lam * lam * (a + 1.0),
            ),
        )
    else:
        g = spec.mcp_gamma
        out = np.where(t <= g * lam, lam * t - t * t / (2.0 * g), 0.5 * g * lam * lam)
    if np.ndim(theta) == 0:
        return float(out)
    return out


def penalty_derivative(theta, spec: PenaltySpec):
    """Right derivative ``p'(theta)`` for ``theta >= 0``."""
    t = np.asarray(theta, dtype=float)
    if np.any(t < 0):
        raise InvalidArgumentError("penalty_derivative is defined for theta >= 0")
    kind, lam = spec.kind, spec.strength
    if kind is PenaltyKind.NONE:
        out = np.zeros_like(t)
    elif kind is PenaltyKind.LASSO:
        out = np.full_like(t, lam)
    elif kind is PenaltyKind.RIDGE:
        out = lam * t
    elif kind is PenaltyKind.LAAD:
        out = lam / (1.0 + t)
    elif kind is PenaltyKind.SCAD:
        a = spec.scad_a
        out = np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))
    else:
        g = spec.mcp_gamma
        out = lam * np.maximum(1.0 - t / (g * lam), 0.0)
    if np.ndim(theta) == 0:
        return float(out)
    return out


def penalty_value(beta: Sequence[float], spec: PenaltySpec, weights: Optional[Sequence[float]] = None) -> float:
    """Weighted total penalty ``sum_j w_j p(beta_j)``; weight 0 exempts a coordinate."""
    beta = np.asarray(beta, dtype=float).ravel()
    if weights is None:
        weights = np.ones_like(beta)
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape != beta.shape:
        raise InvalidArgumentError(f"weights length {weights.size} does not match beta length {beta.size}")
    if np.any(weights < 0):
        raise InvalidArgumentError("weights must be nonnegative")
    return float(np.sum(weights * penalty(beta, spec)))


def selection_threshold(spec: PenaltySpec) -> float:
    """Smallest ``|z|`` at which the prox becomes nonzero (0 for ridge/none)."""
    if spec.is_null or spec.kind is PenaltyKind.RIDGE:
        return 0.0
    if spec.kind is PenaltyKind.LAAD:
        return laad_threshold(spec.strength)
    return spec.strength


def oracle_prox(z: float, spec: PenaltySpec, lo: float, hi: float, step: float, refine: int = 0) -> float:
    """Brute-force grid minimizer of ``0.5 (z - t)^2 + p(t)``.

    Independent of the closed forms; intended for tests. With ``refine > 0``
    the search is repeated ``refine`` times on a 10x finer grid around the
    incumbent, and the exact point ``t = 0`` is always a candidate.
    """
    z = _check_finite("z", z)
    if not (step > 0 and hi > lo):
        raise InvalidArgumentError("oracle grid requires lo < hi and step > 0")
    grid = np.arange(lo, hi + 0.5 * step, step)
    if grid.size == 0:
        raise InvalidArgumentError("oracle grid is empty")

    def objective(t):
        return 0.5 * (z - t) ** 2 + penalty(t, spec)

    values = objective(grid)
    best = float(grid[np.argmin(values)])
    best_value = float(values.min())
    h = step
    for _ in range(refine):
        local = np.linspace(best - 2.0 * h, best + 2.0 * h, 41)
        local_values = objective(local)
        i = int(np.argmin(local_values))
        if local_values[i] < best_value:
            best, best_value = float(local[i]), float(local_values[i])
        h /= 10.0
    if lo <= 0.0 <= hi and objective(0.0) <= best_value:
        return 0.0
    return best
