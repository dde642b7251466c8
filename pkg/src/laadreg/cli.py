"""Command-line interface.

Every command writes its artifacts into an output directory (``--output-dir``,
else ``$LAAD_OUTPUT_DIR``, else the current directory) and prints the paths
written. Stochastic outputs start with a ``#`` comment line recording the
seed, replicate count and package version.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .bootstrap import bootstrap_reserve
from .errors import LaadError
from .penalties import PenaltyKind, PenaltySpec, laad_threshold, prox
from .reserving import (
    ReserveModel,
    actual_increments,
    build_design,
    fit_cross_classified,
    fit_reserving,
    link_ratios,
    load_example,
    predict_next_diagonal,
    read_diagonal_csv,
    read_triangles_csv,
    triangles_to_csv,
    validate,
)
from .selection import edf_path, kfold_cv
from .simulation import MODELS as SIM_MODELS
from .simulation import SimConfig, qq_residuals, run_sim_study
from .solver import Dataset, coordinate_descent, ols_fit

SCHEMA_VERSION = "1"
OUTPUT_ENV = "LAAD_OUTPUT_DIR"


class _Writer:
    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.written: List[Path] = []

    def text(self, name: str, content: str) -> Path:
        path = self.outdir / name
        path.write_text(content, encoding="utf-8")
        self.written.append(path)
        return path

    def csv(self, name: str, header, rows, comment: Optional[str] = None) -> Path:
        path = self.outdir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        self.written.append(path)
        return path

    def json(self, name: str, payload) -> Path:
        payload = {"schema_version": SCHEMA_VERSION, **payload}
        return self.text(name, json.dumps(payload, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)!r}")


def _num(x, digits: int = 10) -> str:
    return f"{x:.{digits}g}"


def _provenance(seed, count_name, count) -> str:
    return f"seed={seed} {count_name}={count} version={__version__}"


# ---------------------------------------------------------------------------
# shared reserving plumbing


def _load_inputs(args):
    if args.input:
        tris = read_triangles_csv(args.input)
        diag = read_diagonal_csv(args.validation) if getattr(args, "validation", None) else None
    else:
        tris, diag = load_example()
        if getattr(args, "validation", None):
            diag = read_diagonal_csv(args.validation)
    return tris, diag


def _fit_from_args(args, design):
    model = ReserveModel.parse(args.model)
    strength = args.strength
    if model.is_penalized and strength is None and not args.cv:
        raise LaadError(f"model {model.value!r} needs --strength or --cv")
    return fit_reserving(
        design, model, strength=strength, scaling=args.scaling, sigma2=args.sigma2,
        balance=not args.no_balance, k=args.k, seed=args.seed,
    )


def _factor_rows(table):
    rows = []
    for n, line in enumerate(table.lines):
        for L in table.lags:
            z = table.zeta[n, L - 2]
            rows.append([line, L, _num(z), f"{math.exp(z):.4f}"])
    return rows


def _fit_summary(table):
    return {
        "model": table.model.value,
        "strength": table.strength,
        "sigma2_hat": table.sigma2_hat,
        "lags": list(table.lags),
        "factors": {line: table.factors[n].tolist() for n, line in enumerate(table.lines)},
        "zeta": {line: table.zeta[n].tolist() for n, line in enumerate(table.lines)},
    }


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args, out: _Writer):
    tris, _ = _load_inputs(args)
    out.text("triangles.csv", triangles_to_csv(tris))
    rows = []
    for tri in tris:
        gamma, alpha, delta = fit_cross_classified(tri)
        rows.append([tri.line, "gamma", "", f"{gamma:.6f}"])
        rows += [[tri.line, "alpha", i + 2, f"{a:.6f}"] for i, a in enumerate(alpha)]
        rows += [[tri.line, "delta", j + 2, f"{d:.6f}"] for j, d in enumerate(delta)]
    out.csv("cross_classified.csv", ["line", "parameter", "index", "estimate"], rows)
    design = build_design(link_ratios(tris))
    table = _fit_from_args(args, design)
    out.csv("factors.csv", ["line", "lag", "zeta", "factor"], _factor_rows(table))
    if args.format == "json":
        out.json("fit.json", _fit_summary(table))
    return 0


def cmd_predict(args, out: _Writer):
    tris, diag = _load_inputs(args)
    design = build_design(link_ratios(tris))
    table = _fit_from_args(args, design)
    pred = predict_next_diagonal(tris, table)
    actual = actual_increments(tris, diag) if diag is not None else None
    rows = []
    for line in pred.lines:
        for k, i in enumerate(pred.accident_years):
            a = "" if actual is None else f"{actual[line][k]:.0f}"
            rows.append([line, int(i), int(pred.latest_lag[line][k]) + 1, f"{pred.incremental[line][k]:.0f}", a])
        a = "" if actual is None else f"{actual[line].sum():.0f}"
        rows.append([line, "total", "", f"{pred.totals[line]:.0f}", a])
    out.csv("predictions.csv", ["line", "accident_year", "dev_lag", "predicted_incremental", "actual_incremental"], rows)
    summary = {**_fit_summary(table), "totals": pred.totals}
    if actual is not None:
        metrics = validate(pred, actual)
        out.csv("metrics.csv", ["line", "rmse", "mae"], [[k, f"{r:.2f}", f"{m:.2f}"] for k, (r, m) in metrics.items()])
        summary["metrics"] = {k: {"rmse": r, "mae": m} for k, (r, m) in metrics.items()}
        summary["actual_totals"] = {k: float(v.sum()) for k, v in actual.items()}
    if args.format == "json":
        out.json("predict.json", summary)
    return 0


def cmd_cv(args, out: _Writer):
    tris, _ = _load_inputs(args)
    design = build_design(link_ratios(tris))
    model = ReserveModel.parse(args.model)
    if not model.is_penalized:
        raise LaadError(f"cv needs a penalized model, got {model.value!r}")
    spec = PenaltySpec(model.value)
    cv = kfold_cv(design.dataset, spec, design.weights, k=args.k, seed=args.seed, scaling=args.scaling)
    comment = _provenance(args.seed, "k", args.k)
    out.csv(
        "cv_grid.csv", ["strength", "cv_rmse_mean", "cv_rmse_se"],
        [[_num(g), _num(m), _num(s)] for g, m, s in zip(cv.grid, cv.cv_rmse_mean, cv.cv_rmse_se)],
        comment=comment,
    )
    if not args.no_edf:
        edf = edf_path(design.dataset, spec, cv.grid, design.weights, scaling=args.scaling)
        out.csv("edf_curve.csv", ["strength", "edf"], [[_num(g), _num(e)] for g, e in zip(cv.grid, edf)])
    payload = {"model": model.value, "k": args.k, "seed": args.seed, "r_min": cv.r_min,
               "r_1se": cv.r_1se, "r_selected": cv.r_selected}
    if args.format == "json":
        out.json("cv.json", payload)
    else:
        out.csv("cv_selection.csv", list(payload), [list(payload.values())], comment=comment)
    return 0


def cmd_bootstrap(args, out: _Writer):
    tris, diag = _load_inputs(args)
    design = build_design(link_ratios(tris))
    base = _fit_from_args(args, design)
    res = bootstrap_reserve(
        design, tris, base.model, S=args.S, seed=args.seed, base=base,
        scaling=args.scaling, sigma2=args.sigma2, balance=not args.no_balance,
    )
    comment = _provenance(args.seed, "S", args.S)
    actual = actual_increments(tris, diag) if diag is not None else None
    rows = []
    for line, s in res.items():
        a = "" if actual is None else f"{actual[line].sum():.0f}"
        rows.append([line, f"{s.point_estimate:.0f}", f"{s.mean:.0f}", f"{s.lower95:.0f}", f"{s.upper95:.0f}", s.n_failed, a])
    out.csv("bootstrap_summary.csv", ["line", "point", "mean", "lower95", "upper95", "failed", "actual"], rows, comment=comment)
    reps = [[line, r + 1, f"{v:.2f}"] for line, s in res.items() for r, v in enumerate(s.replicates)]
    out.csv("bootstrap_replicates.csv", ["line", "replicate", "unpaid_loss"], reps, comment=comment)
    if args.format == "json":
        out.json("bootstrap.json", {
            "model": base.model.value, "strength": base.strength, "seed": args.seed, "S": args.S,
            "lines": {k: {"mean": s.mean, "lower95": s.lower95, "upper95": s.upper95, "point": s.point_estimate,
                          "failed": s.n_failed} for k, s in res.items()},
        })
    return 0


def cmd_simulate(args, out: _Writer):
    models = tuple(args.models.split(",")) if args.models else SIM_MODELS
    cfg = SimConfig(n=args.n, reps=args.reps, seed=args.seed, models=models, k=args.k)
    rep = run_sim_study(cfg)
    comment = _provenance(args.seed, "reps", args.reps) + f" n={args.n}"
    idx = [j for j in range(rep.truth.size) if j < 9 or rep.truth[j] != 0] if not args.all_coefficients else range(rep.truth.size)
    header = ["coefficient", "truth"] + [f"bias_{m}" for m in cfg.models] + [f"rmse_{m}" for m in cfg.models]
    rows = [
        [rep.coef_names[j], _num(rep.truth[j])] + [f"{rep.bias[m][j]:.3f}" for m in cfg.models] + [f"{rep.rmse[m][j]:.3f}" for m in cfg.models]
        for j in idx
    ]
    out.csv("estimation.csv", header, rows, comment=comment)
    out.csv(
        "norms.csv", ["model", "mean_l1_diff", "mean_l0_diff", "avg_runtime_seconds", "failures"],
        [[m, f"{rep.mean_l1_diff[m]:.3f}", f"{rep.mean_l0_diff[m]:.3f}", f"{rep.avg_runtime_seconds[m]:.4f}", rep.failures[m]] for m in cfg.models],
        comment=comment,
    )
    qq = qq_residuals(args.n, args.seed)
    out.csv(
        "qq_residuals.csv", ["model", "theoretical", "sample"],
        [[name, _num(t), _num(s)] for name, (th, sm) in qq.items() for t, s in zip(th, sm)],
        comment=comment,
    )
    return 0


def _parse_range(text: str):
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise LaadError(f"range must look like lo:hi:step, got {text!r}") from None
    if not (step > 0 and hi >= lo):
        raise LaadError(f"invalid range {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    digits = max(0, -int(math.floor(math.log10(step))) + 2)
    return [round(lo + k * step, digits) for k in range(count)]


def cmd_curves(args, out: _Writer):
    zs = _parse_range(args.z_range)
    spec = PenaltySpec(args.penalty, args.r)
    out.csv("prox_curve.csv", ["z", "theta"], [[_num(z), _num(prox(z, spec))] for z in zs])
    if args.region_r_range:
        rs = _parse_range(args.region_r_range)
        rows = []
        for r in rs:
            if r <= 0:
                continue
            thr = laad_threshold(r)
            for z in zs:
                theta = prox(z, PenaltySpec("laad", r))
                rows.append([_num(r), _num(z), int(theta != 0.0), _num(thr)])
        out.csv("laad_region.csv", ["r", "z", "nonzero", "threshold"], rows)
    return 0


def cmd_regress(args, out: _Writer):
    with open(args.data, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise LaadError(f"{args.data}: empty file")
        header = [h.strip() for h in header]
        if args.response not in header:
            raise LaadError(f"{args.data}: response column {args.response!r} not found")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise LaadError(f"{args.data}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise LaadError(f"{args.data}:{reader.line_num}: non-numeric value") from None
    arr = np.array(rows, dtype=float)
    yi = header.index(args.response)
    names = [h for k, h in enumerate(header) if k != yi]
    X = np.delete(arr, yi, axis=1)
    weights = np.ones(X.shape[1])
    if args.intercept:
        X = np.hstack([np.ones((X.shape[0], 1)), X])
        names = ["(intercept)"] + names
        weights = np.concatenate([[0.0], weights])
    data = Dataset(X, arr[:, yi], names)
    kind = PenaltyKind.parse(args.penalty)
    strength = args.strength
    cv = None
    if kind is PenaltyKind.NONE:
        fit = ols_fit(data)
    else:
        if strength is None:
            if not args.cv:
                raise LaadError("penalized regression needs --strength or --cv")
            cv = kfold_cv(data, PenaltySpec(kind), weights, k=args.k, seed=args.seed, scaling=args.scaling)
            strength = cv.r_selected
        fit = coordinate_descent(data, PenaltySpec(kind, strength), weights, scaling=args.scaling)
    comment = _provenance(args.seed, "k", args.k) if cv is not None else None
    out.csv("coefficients.csv", ["term", "estimate"], [[n, _num(b)] for n, b in zip(names, fit.coefficients)], comment=comment)
    if args.format == "json":
        out.json("regress.json", {
            "penalty": kind.value, "strength": strength, "coefficients": dict(zip(names, fit.coefficients.tolist())),
            "sigma2_hat": fit.sigma2_hat, "converged": fit.converged, "n_iter": fit.n_iter,
        })
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_reserving_args(p, penalized_default="laad"):
    p.add_argument("--input", help="triangle CSV (line,accident_year,dev_lag,cumulative_loss); bundled example if omitted")
    p.add_argument("--validation", help="CSV of realized next-diagonal cells")
    p.add_argument("--model", default=penalized_default, choices=[m.value for m in ReserveModel])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strength", type=float, help="fixed penalty strength")
    g.add_argument("--cv", action="store_true", help="select the strength by k-fold CV")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scaling", default="mean_square", choices=["mean_square", "unit", "none"])
    p.add_argument("--sigma2", default="unbiased", choices=["unbiased", "mle"])
    p.add_argument("--no-balance", action="store_true", help="do not recentre residuals through eta_2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laadreg", description="LAAD-penalized regression and loss reserving")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help=f"artifact directory (default ${OUTPUT_ENV} or .)")
    common.add_argument("--format", default="csv", choices=["csv", "json"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit development factors")
    _add_reserving_args(p, "unconstrained")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict the next calendar diagonal")
    _add_reserving_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", parents=[common], help="cross-validate the penalty strength")
    _add_reserving_args(p)
    p.add_argument("--no-edf", action="store_true", help="skip the degrees-of-freedom curve")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bootstrap", parents=[common], help="bootstrap next-year unpaid losses")
    _add_reserving_args(p)
    p.add_argument("--S", type=int, default=1000, help="number of replicates")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simulate", parents=[common], help="run the simulation benchmark")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--models", help=f"comma-separated subset of {','.join(SIM_MODELS)}")
    p.add_argument("--all-coefficients", action="store_true", help="report all 45 coefficients")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curves", parents=[common], help="emit thresholding curves and the LAAD selection region")
    p.add_argument("--penalty", default="laad", choices=[k.value for k in PenaltyKind])
    p.add_argument("--r", type=float, default=1.0, help="penalty strength")
    p.add_argument("--z-range", default="-5:5:0.01")
    p.add_argument("--region-r-range", help="lo:hi:step of r for the zero/nonzero region grid")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("regress", parents=[common], help="penalized regression on a numeric CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--penalty", default="laad", choices=[k.value for k in PenaltyKind])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strength", type=float)
    g.add_argument("--cv", action="store_true")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scaling", default="unit", choices=["unit", "mean_square", "none"])
    p.add_argument("--intercept", action="store_true", help="add an unpenalized intercept column")
    p.set_defaults(func=cmd_regress)
    return parser


_RANGE_FLAGS = ("--z-range", "--region-r-range")


def _glue_ranges(argv):
    # argparse mistakes "-5:5:0.01" for an option; attach it to its flag instead
    out, k = [], 0
    while k < len(argv):
        a = argv[k]
        if a in _RANGE_FLAGS and k + 1 < len(argv):
            out.append(f"{a}={argv[k + 1]}")
            k += 2
        else:
            out.append(a)
            k += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_ranges(argv))
    outdir = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        out = _Writer(outdir)
        status = args.func(args, out)
    except (LaadError, OSError, ValueError) as exc:
        print(f"laadreg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for path in out.written:
        print(path)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
