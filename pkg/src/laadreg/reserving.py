"""Run-off triangles, link-ratio regression and next-diagonal reserving.

The link-ratio model regresses ``C = log(Y[i, j+1] / Y[i, j])`` on indicator
columns: one ``eta`` per development lag shared by all lines and one ``kappa``
per lag for every line except the last, which serves as the baseline. The
log development factor of line ``n`` at lag ``j`` is ``zeta = eta_j + kappa_j``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, InvalidArgumentError, InvalidStateError
from .penalties import PenaltyKind, PenaltySpec
from .selection import CvResult, kfold_cv
from .solver import Dataset, FitResult, coordinate_descent, forward_bic, ols_fit

__all__ = [
    "LossTriangle",
    "LinkRatioSet",
    "ReserveDesign",
    "DevFactorTable",
    "Prediction",
    "ReserveModel",
    "CSV_HEADER",
    "read_triangles_csv",
    "read_diagonal_csv",
    "triangles_to_csv",
    "load_example",
    "link_ratios",
    "build_design",
    "fit_reserving",
    "fit_cross_classified",
    "predict_next_diagonal",
    "validate",
    "actual_increments",
    "PUBLISHED_STRENGTH",
]

CSV_HEADER = ("line", "accident_year", "dev_lag", "cumulative_loss")

#: strength used for the published LAAD development factors
PUBLISHED_STRENGTH = math.log(1.005261)


class ReserveModel(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    BEST = "best"
    LASSO = "lasso"
    SCAD = "scad"
    MCP = "mcp"
    LAAD = "laad"

    @classmethod
    def parse(cls, value) -> "ReserveModel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise InvalidArgumentError(f"unknown model {value!r}; expected one of {names}") from None

    @property
    def is_penalized(self) -> bool:
        return self in (ReserveModel.LASSO, ReserveModel.SCAD, ReserveModel.MCP, ReserveModel.LAAD)


# ---------------------------------------------------------------------------
# triangles and CSV I/O


@dataclass(frozen=True)
class LossTriangle:
    """Cumulative losses for one line of business.

    ``values[i-1, j-1]`` holds accident year ``i``, development lag ``j`` and
    is NaN outside the observed set ``j <= min(n_lags, n_origins + 1 - i)``.
    ``n_lags`` below ``n_origins`` gives a trapezoid with the oldest
    development lags cut off.
    """

    line: str
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"line {self.line!r}: triangle must be a nonempty 2-d array")
        I, J = v.shape
        if J > I:
            raise DataError(f"line {self.line!r}: {J} development lags exceed {I} accident years")
        mask = self.observed_mask(I, J)
        missing = np.argwhere(mask & ~np.isfinite(v))
        if missing.size:
            i, j = missing[0] + 1
            raise DataError(f"line {self.line!r}: missing cell (accident_year={i}, dev_lag={j})")
        extra = np.argwhere(~mask & np.isfinite(v))
        if extra.size:
            i, j = extra[0] + 1
            raise DataError(f"line {self.line!r}: cell (accident_year={i}, dev_lag={j}) lies outside the triangle")
        bad = np.argwhere(mask & ~(v > 0))
        if bad.size:
            i, j = bad[0] + 1
            raise DataError(f"line {self.line!r}: nonpositive cell (accident_year={i}, dev_lag={j})")
        v[~mask] = np.nan
        v.setflags(write=False)
        object.__setattr__(self, "line", str(self.line))
        object.__setattr__(self, "values", v)

    @staticmethod
    def observed_mask(n_origins: int, n_lags: int) -> np.ndarray:
        i = np.arange(1, n_origins + 1)[:, None]
        j = np.arange(1, n_lags + 1)[None, :]
        return j <= np.minimum(n_lags, n_origins + 1 - i)

    @property
    def n_origins(self) -> int:
        return self.values.shape[0]

    @property
    def n_lags(self) -> int:
        return self.values.shape[1]

    def latest(self) -> Tuple[np.ndarray, np.ndarray]:
        """Latest observed lag and cumulative value per accident year."""
        lags = np.minimum(self.n_lags, self.n_origins - np.arange(self.n_origins))
        vals = self.values[np.arange(self.n_origins), lags - 1]
        return lags, vals

    def cells(self):
        for i in range(self.n_origins):
            for j in range(self.n_lags):
                if np.isfinite(self.values[i, j]):
                    yield i + 1, j + 1, float(self.values[i, j])


def _format_amount(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _read_records(text: str, source: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataError(f"{source}:1: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
    records = []
    seen = set()
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise DataError(f"{source}:{lineno}: expected 4 fields, got {len(row)}")
        name = row[0].strip()
        if not name:
            raise DataError(f"{source}:{lineno}: empty line identifier")
        try:
            i = int(row[1])
            j = int(row[2])
        except ValueError:
            raise DataError(f"{source}:{lineno}: accident_year and dev_lag must be integers") from None
        try:
            value = float(row[3])
        except ValueError:
            raise DataError(f"{source}:{lineno}: cumulative_loss {row[3]!r} is not a number") from None
        if i < 1 or j < 1:
            raise DataError(f"{source}:{lineno}: accident_year and dev_lag are 1-based")
        if not math.isfinite(value) or value <= 0:
            raise DataError(f"{source}:{lineno}: cumulative_loss must be positive and finite, got {row[3]!r}")
        key = (name, i, j)
        if key in seen:
            raise DataError(f"{source}:{lineno}: duplicate cell {key}")
        seen.add(key)
        records.append((name, i, j, value))
    if not records:
        raise DataError(f"{source}: no data rows")
    return records


def _read_text(path_or_text) -> Tuple[str, str]:
    if isinstance(path_or_text, (str, os.PathLike)) and "\n" not in str(path_or_text):
        with open(path_or_text, encoding="utf-8", newline="") as fh:
            return fh.read(), str(path_or_text)
    return str(path_or_text), "<text>"


def read_triangles_csv(path_or_text) -> List[LossTriangle]:
    """Load triangles from the long CSV format; lines keep their first-appearance order."""
    text, source = _read_text(path_or_text)
    records = _read_records(text, source)
    order: List[str] = []
    by_line: Dict[str, list] = {}
    for name, i, j, v in records:
        if name not in by_line:
            order.append(name)
            by_line[name] = []
        by_line[name].append((i, j, v))
    out = []
    for name in order:
        cells = by_line[name]
        I = max(i for i, _, _ in cells)
        J = max(j for _, j, _ in cells)
        arr = np.full((I, J), np.nan)
        for i, j, v in cells:
            arr[i - 1, j - 1] = v
        out.append(LossTriangle(name, arr))
    sizes = {t.n_origins for t in out}
    if len(sizes) > 1:
        raise DataError(f"{source}: lines have different numbers of accident years {sorted(sizes)}")
    return out


def read_diagonal_csv(path_or_text) -> Dict[str, Dict[int, float]]:
    """Load realized cells (e.g. the next calendar diagonal) as ``{line: {accident_year: value}}``."""
    text, source = _read_text(path_or_text)
    out: Dict[str, Dict[int, float]] = {}
    for name, i, _, v in _read_records(text, source):
        out.setdefault(name, {})[i] = v
    return out


def triangles_to_csv(triangles: Sequence[LossTriangle]) -> str:
    """Long-format CSV text, ordered by line, accident year, development lag."""
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for tri in triangles:
        for i, j, v in tri.cells():
            buf.write(f"{tri.line},{i},{j},{_format_amount(v)}\n")
    return buf.getvalue()


def load_example():
    """Bundled two-line example: training triangles and the realized next diagonal."""
    pkg = resources.files("laadreg") / "data"
    tris = read_triangles_csv((pkg / "triangles.csv").read_text(encoding="utf-8"))
    diag = read_diagonal_csv((pkg / "next_diagonal.csv").read_text(encoding="utf-8"))
    return tris, diag


# ---------------------------------------------------------------------------
# link ratios and design


@dataclass(frozen=True)
class LinkRatioSet:
    """Log link ratios ordered by (line, target lag, accident year).

    ``line`` holds 0-based positions into ``lines``; ``lag`` is the target lag
    ``j + 1`` of ``log(Y[i, j+1] / Y[i, j])``.
    """

    lines: tuple
    line: np.ndarray
    accident_year: np.ndarray
    lag: np.ndarray
    value: np.ndarray
    n_lags: int

    def __len__(self):
        return self.value.shape[0]


def link_ratios(triangles: Sequence[LossTriangle]) -> LinkRatioSet:
    triangles = list(triangles)
    if not triangles:
        raise InvalidArgumentError("at least one triangle is required")
    shapes = {t.values.shape for t in triangles}
    if len(shapes) != 1:
        raise DataError(f"triangles must share their shape, got {sorted(shapes)}")
    line, ay, lag, val = [], [], [], []
    for n, tri in enumerate(triangles):
        v = tri.values
        for j in range(1, tri.n_lags):
            for i in range(tri.n_origins):
                if np.isfinite(v[i, j]):
                    line.append(n)
                    ay.append(i + 1)
                    lag.append(j + 1)
                    val.append(math.log(v[i, j] / v[i, j - 1]))
    return LinkRatioSet(
        lines=tuple(t.line for t in triangles),
        line=np.array(line, dtype=int),
        accident_year=np.array(ay, dtype=int),
        lag=np.array(lag, dtype=int),
        value=np.array(val, dtype=float),
        n_lags=triangles[0].n_lags,
    )


@dataclass(frozen=True)
class ReserveDesign:
    """Indicator regression for log link ratios.

    ``coef_map[k]`` is ``("eta", lag, None)`` or ``("kappa", lag, line_index)``.
    ``weights`` exempts ``eta_2`` from penalization.
    """

    dataset: Dataset
    weights: np.ndarray
    coef_map: tuple
    ratios: LinkRatioSet

    @property
    def lines(self):
        return self.ratios.lines

    @property
    def lags(self):
        return tuple(range(2, self.ratios.n_lags + 1))

    def with_response(self, response) -> "ReserveDesign":
        return replace(self, dataset=self.dataset.with_response(response))

    def eta2_column(self) -> int:
        return self.coef_map.index(("eta", 2, None))


def build_design(lr: LinkRatioSet, n_lines: Optional[int] = None) -> ReserveDesign:
    if n_lines is None:
        n_lines = len(lr.lines)
    if n_lines < 1:
        raise InvalidArgumentError(f"n_lines must be >= 1, got {n_lines}")
    if len(lr) and lr.line.max() >= n_lines:
        raise InvalidArgumentError("link ratios reference more lines than n_lines")
    lags = range(2, lr.n_lags + 1)
    coef_map = [("eta", L, None) for L in lags]
    for n in range(n_lines - 1):
        coef_map += [("kappa", L, n) for L in lags]
    X = np.zeros((len(lr), len(coef_map)))
    col = {c: k for k, c in enumerate(coef_map)}
    for row in range(len(lr)):
        L, n = int(lr.lag[row]), int(lr.line[row])
        X[row, col[("eta", L, None)]] = 1.0
        if n < n_lines - 1:
            X[row, col[("kappa", L, n)]] = 1.0
    names = [f"eta_{L}" if kind == "eta" else f"kappa_{L}[{lr.lines[n] if n < len(lr.lines) else n}]" for kind, L, n in coef_map]
    weights = np.ones(len(coef_map))
    if coef_map:
        weights[0] = 0.0
    return ReserveDesign(Dataset(X, lr.value, names), weights, tuple(coef_map), lr)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class DevFactorTable:
    """Fitted log development factors ``zeta[line, lag - 2]`` and their exponentials."""

    lines: tuple
    lags: tuple
    zeta: np.ndarray
    sigma2_hat: float
    model: ReserveModel
    strength: Optional[float] = None
    coefficients: Optional[np.ndarray] = None
    fit: Optional[FitResult] = None
    cv: Optional[CvResult] = None
    fitted: Optional[np.ndarray] = None

    @property
    def factors(self) -> np.ndarray:
        return np.exp(self.zeta)

    def factor(self, line, lag: int) -> float:
        n = self.lines.index(line) if not isinstance(line, (int, np.integer)) else int(line)
        if lag not in self.lags:
            raise InvalidStateError(f"no development factor for lag {lag}")
        return float(math.exp(self.zeta[n, self.lags.index(lag)]))


def _zeta_from_coefficients(design: ReserveDesign, coef) -> np.ndarray:
    lines, lags = design.lines, design.lags
    zeta = np.zeros((len(lines), len(lags)))
    for k, (kind, L, n) in enumerate(design.coef_map):
        if kind == "eta":
            zeta[:, L - 2] += coef[k]
        else:
            zeta[n, L - 2] += coef[k]
    return zeta


_PENALTY_OF = {
    ReserveModel.LASSO: PenaltyKind.LASSO,
    ReserveModel.SCAD: PenaltyKind.SCAD,
    ReserveModel.MCP: PenaltyKind.MCP,
    ReserveModel.LAAD: PenaltyKind.LAAD,
}


def fit_reserving(
    design: ReserveDesign,
    model="laad",
    strength: Optional[float] = None,
    scaling: str = "mean_square",
    sigma2: str = "unbiased",
    balance: bool = True,
    k: int = 5,
    seed: int = 0,
    tol: float = 1e-10,
    max_sweeps: int = 100_000,
) -> DevFactorTable:
    """Fit one of the six link-ratio model specifications.

    Parameters
    ----------
    design : ReserveDesign
    model : {"unconstrained", "best", "lasso", "scad", "mcp", "laad"}
    strength : float, optional
        Penalty strength for the penalized models; selected by ``k``-fold CV
        with the geometric one-SE rule when omitted.
    scaling : {"mean_square", "unit", "none"}
        Working scale of the penalized fit (see :mod:`laadreg.solver`).
    sigma2 : {"unbiased", "mle"}
        ``RSS / (n - k)`` or ``RSS / n``, pooled over all lines.
    balance : bool
        Shift ``eta_2`` so residuals sum to zero over all observations,
        then recompute ``sigma2``. A no-op for the unconstrained fit.
    """
    model = ReserveModel.parse(model)
    data = design.dataset
    cv = None
    if model is ReserveModel.UNCONSTRAINED:
        fit = ols_fit(data, sigma2=sigma2)
    elif model is ReserveModel.BEST:
        fit = forward_bic(data, always_in=[design.eta2_column()], sigma2=sigma2)
    else:
        spec = PenaltySpec(_PENALTY_OF[model])
        if strength is None:
            cv = kfold_cv(data, spec, design.weights, k=k, seed=seed, scaling=scaling)
            strength = cv.r_selected
        fit = coordinate_descent(
            data, spec.with_strength(strength), design.weights, tol=tol, max_sweeps=max_sweeps,
            scaling=scaling, sigma2=sigma2,
        )
    coef = np.array(fit.coefficients, dtype=float)
    y = data.response
    if balance and model is not ReserveModel.UNCONSTRAINED:
        e2 = design.eta2_column()
        rows = data.design[:, e2] != 0
        coef[e2] += float(np.sum(y - data.design @ coef)) / int(rows.sum())
    fitted = data.design @ coef
    rss = float(np.sum((y - fitted) ** 2))
    nnz = int(np.count_nonzero(coef))
    if sigma2 == "mle":
        s2 = rss / data.n
    else:
        s2 = rss / (data.n - nnz) if data.n > nnz else float("nan")
    return DevFactorTable(
        lines=design.lines,
        lags=design.lags,
        zeta=_zeta_from_coefficients(design, coef),
        sigma2_hat=s2,
        model=model,
        strength=strength if model.is_penalized else None,
        coefficients=coef,
        fit=fit,
        cv=cv,
        fitted=fitted,
    )


def fit_cross_classified(triangle: LossTriangle):
    """OLS of ``log Y`` on accident-year and lag effects with corner constraints.

    Returns
    -------
    gamma : float
    alpha : ndarray
        Accident-year effects for years ``2..I``.
    delta : ndarray
        Development effects for lags ``2..J``.
    """
    I, J = triangle.n_origins, triangle.n_lags
    rows, y = [], []
    for i, j, v in triangle.cells():
        x = np.zeros(I + J - 1)
        x[0] = 1.0
        if i > 1:
            x[i - 1] = 1.0
        if j > 1:
            x[I + j - 2] = 1.0
        rows.append(x)
        y.append(math.log(v))
    X = np.array(rows)
    names = ["gamma"] + [f"alpha_{i}" for i in range(2, I + 1)] + [f"delta_{j}" for j in range(2, J + 1)]
    # years or lags absent from a degenerate trapezoid make the design singular
    coef = ols_fit(Dataset(X, y, names)).coefficients
    return float(coef[0]), coef[1:I], coef[I:]


# ---------------------------------------------------------------------------
# prediction and validation


@dataclass
class Prediction:
    """Incremental next-diagonal predictions for accident years ``2..I``."""

    lines: tuple
    accident_years: np.ndarray
    latest_lag: Dict[str, np.ndarray]
    latest_value: Dict[str, np.ndarray]
    incremental: Dict[str, np.ndarray]
    sigma2_hat: float

    @property
    def totals(self) -> Dict[str, float]:
        return {line: float(v.sum()) for line, v in self.incremental.items()}


def predict_next_diagonal(
    triangles: Sequence[LossTriangle], factors: DevFactorTable, sigma2: Optional[float] = None
) -> Prediction:
    """``Y[i, j] * (exp(zeta[j+1] + sigma2 / 2) - 1)`` for the latest cell of each year ``i >= 2``."""
    s2 = factors.sigma2_hat if sigma2 is None else float(sigma2)
    if not s2 >= 0:
        raise InvalidArgumentError(f"sigma2 must be nonnegative, got {s2!r}")
    latest_lag, latest_value, inc = {}, {}, {}
    years = None
    for tri in triangles:
        if tri.line not in factors.lines:
            raise InvalidStateError(f"no development factors for line {tri.line!r}")
        n = factors.lines.index(tri.line)
        lags, vals = tri.latest()
        lags, vals = lags[1:], vals[1:]
        years = np.arange(2, tri.n_origins + 1)
        out = np.empty(lags.shape[0])
        for k, (j, y) in enumerate(zip(lags, vals)):
            if j + 1 not in factors.lags:
                raise InvalidStateError(f"line {tri.line!r}: no development factor for lag {j + 1}")
            z = factors.zeta[n, factors.lags.index(j + 1)]
            out[k] = y * math.expm1(z + 0.5 * s2)
        latest_lag[tri.line] = lags
        latest_value[tri.line] = vals
        inc[tri.line] = out
    return Prediction(tuple(t.line for t in triangles), years, latest_lag, latest_value, inc, s2)


def actual_increments(triangles: Sequence[LossTriangle], diagonal: Dict[str, Dict[int, float]]):
    """Realized incremental losses ``Y[i, j+1] - Y[i, j]`` for years ``2..I``."""
    out = {}
    for tri in triangles:
        if tri.line not in diagonal:
            raise DataError(f"no realized values for line {tri.line!r}")
        _, vals = tri.latest()
        row = []
        for i in range(2, tri.n_origins + 1):
            if i not in diagonal[tri.line]:
                raise DataError(f"line {tri.line!r}: no realized value for accident year {i}")
            row.append(diagonal[tri.line][i] - vals[i - 1])
        out[tri.line] = np.array(row)
    return out


def validate(prediction: Prediction, actuals: Dict[str, Sequence[float]]) -> Dict[str, Tuple[float, float]]:
    """Per-line ``(rmse, mae)`` of incremental predictions against realized increments."""
    out = {}
    for line, pred in prediction.incremental.items():
        if line not in actuals:
            raise InvalidArgumentError(f"no actuals for line {line!r}")
        act = np.asarray(actuals[line], dtype=float)
        if act.shape != pred.shape:
            raise InvalidArgumentError(f"line {line!r}: {act.size} actuals for {pred.size} predictions")
        err = pred - act
        out[line] = (math.sqrt(float(np.mean(err**2))), float(np.mean(np.abs(err))))
    return out
