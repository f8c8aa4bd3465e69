"""Batch command-line front end: ``epcde {estimate,risk,simulate,design}``.

Exit codes: 0 success, 2 bad input (parse errors, bad flags or parameters),
3 estimator precondition failure or a study in which every replicate failed.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from . import estimator as ep
from .design import estimate_design, optimal_design
from .io import ParseError, fmt, read_dataset, write_grid, write_rows
from .risk import SmoothnessClass, risk_report
from .simlab import load_config, run_study

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _fail(code, message):
    print(f"epcde: {message}", file=sys.stderr)
    return code


# --- estimate ------------------------------------------------------------

def cmd_estimate(args):
    try:
        data = read_dataset(args.input)
    except (OSError, ParseError) as exc:
        return _fail(EXIT_INPUT, f"{args.input}: {exc}")
    except ValueError as exc:
        return _fail(EXIT_INPUT, f"{args.input}: {exc}")
    ny, nx = args.grid
    if ny < 2 or nx < 2:
        return _fail(EXIT_INPUT, "--grid needs at least 2 points per axis")
    if args.loss == "square":
        lo, hi = 0.0, 1.0
    elif args.y_range is not None:
        lo, hi = args.y_range
    else:
        pad = 0.5 * float(np.std(data.y)) or 1.0
        lo, hi = float(data.y.min()) - pad, float(data.y.max()) + pad
    if not lo < hi:
        return _fail(EXIT_INPUT, "--y-range must satisfy LO < HI")
    y_grid = np.linspace(lo, hi, ny)
    x_grid = np.linspace(0.0, 1.0, nx)
    if data.n < 16:
        return _fail(EXIT_PRECONDITION, f"need n >= 16 observations, got {data.n}")
    try:
        phat = estimate_design(data.x)
        fitted = ep.fit(data, args.loss, phat=phat)
        values = ep.evaluate_grid(fitted, y_grid, x_grid)
    except ValueError as exc:
        return _fail(EXIT_PRECONDITION, str(exc))
    zero_slices = 0
    if args.project:
        values, flags = ep.project_nonneg(values, args.loss, np.gradient(y_grid))
        zero_slices = int(np.sum(flags))
    meta = {
        "loss": args.loss,
        "n": data.n,
        "seed": "NA",
        "version": __version__,
        "d_hat": fmt(fitted.difficulty),
        "K": fitted.schedule.K,
        "T": fitted.schedule.T,
        "projected": "yes" if args.project else "no",
        "zero_slices": zero_slices,
    }
    write_grid(args.output, y_grid, x_grid, values, meta)
    return EXIT_OK


# --- risk ----------------------------------------------------------------

_Q_KINDS = {"sobolev", "analytic_sobolev", "uni_sobolev"}


def _design_difficulty(design):
    """``int 1/p`` for the uniform design or a two-column ``x,p`` CSV."""
    if design == "uniform":
        return 1.0
    rows = np.loadtxt(design, delimiter=",", skiprows=1, ndmin=2)
    x, p = rows[:, 0], rows[:, 1]
    if np.any(p <= 0) or np.any(np.diff(x) <= 0):
        raise ValueError("design file needs increasing x and positive p")
    return float(np.trapezoid(1.0 / p, x))


def cmd_risk(args):
    kind = args.cls[0]
    try:
        params = tuple(float(v) for v in args.cls[1:])
    except ValueError:
        return _fail(EXIT_INPUT, f"--class parameters must be numbers: {args.cls[1:]}")
    if kind in _Q_KINDS and args.Q is None:
        return _fail(EXIT_INPUT, f"--Q is required for class {kind}")
    try:
        cls = SmoothnessClass(kind, params, args.Q if args.Q is not None else 1.0)
        d = _design_difficulty(args.design)
        report = risk_report(cls, d, args.n, C=args.C)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    except ArithmeticError as exc:
        return _fail(EXIT_PRECONDITION, str(exc))
    fields = [
        ("class", kind),
        ("loss", args.loss),
        ("n", args.n),
        ("difficulty", report.coefficient_of_difficulty),
        ("pinsker", report.pinsker),
        ("risk", report.risk_closed_form),
    ]
    if kind == "bounded_spectrum":
        fields.append(("note", f"upper bound up to C (C={args.C})"))
    if report.risk_series is not None:
        fields += [("risk_series", report.risk_series), ("eta", report.eta_n), ("residual", report.residual)]
    for key, value in fields:
        print(f"{key}: {value if isinstance(value, str) else f'{value:.6g}'}")
    if args.output:
        write_rows(args.output, [k for k, _ in fields], [[v for _, v in fields]])
    return EXIT_OK


# --- simulate ------------------------------------------------------------

def cmd_simulate(args):
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_INPUT, f"{args.config}: {exc}")
    report = run_study(cfg)
    os.makedirs(args.output, exist_ok=True)
    names = list(report.ise)
    cols = ["n", "med_ratio_super", "med_ratio_sub", "med_ratio_uni", "mean_ise_ep", "mean_ise_oracle", "failures"]
    rows = []
    for i, n in enumerate(report.n_values):
        pick = lambda arr: "NA" if arr is None else arr[i]
        rows.append([n, pick(report.median_ratio_super), pick(report.median_ratio_sub),
                     pick(report.median_ratio_uni), pick(report.mean_ise_ep),
                     pick(report.mean_ise_oracle), report.failures[i]])
    write_rows(os.path.join(args.output, "summary.csv"), cols, rows)
    per_rep = []
    for i, n in enumerate(report.n_values):
        for rep in range(report.replicates):
            per_rep.append([n, rep] + [report.ise[name][i, rep] for name in names])
    write_rows(os.path.join(args.output, "replicates.csv"), ["n", "rep"] + [f"ise_{m}" for m in names], per_rep)
    total = report.failures.sum()
    if total:
        print(f"epcde: {total} replicate(s) failed", file=sys.stderr)
    if total == report.replicates * report.n_values.size:
        return EXIT_PRECONDITION
    return EXIT_OK


# --- design --------------------------------------------------------------

def cmd_design(args):
    path = args.sigma_file if args.target == "regression" else args.mass_file
    if path is None:
        flag = "--sigma-file" if args.target == "regression" else "--mass-file"
        return _fail(EXIT_INPUT, f"{flag} is required for --target {args.target}")
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if rows.shape[1] != 2:
            raise ValueError("expected two columns x,value")
        x, v = rows[:, 0], rows[:, 1]
        if np.any(~np.isfinite(rows)) or np.any(np.diff(x) <= 0) or x[0] > 0 or x[-1] < 1:
            raise ValueError("x must increase and cover [0, 1]")
        if np.any(v <= 0):
            raise ValueError("input function must be positive")
        density = optimal_design(args.target, lambda t: np.interp(t, x, v))
    except (OSError, ValueError) as exc:
        return _fail(EXIT_INPUT, f"{path}: {exc}")
    if args.grid < 2:
        return _fail(EXIT_INPUT, "--grid must be at least 2")
    grid = np.linspace(0.0, 1.0, args.grid)
    values = density(grid)
    values = values / np.trapezoid(values, grid)  # exact unit mass on the emitted grid
    out = open(args.output, "w", encoding="utf-8", newline="\n") if args.output else sys.stdout
    try:
        out.write("x,density\n")
        for a, b in zip(grid, values):
            out.write(f"{fmt(a)},{fmt(b)}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="epcde", description="Blockwise-shrinkage conditional density estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="fit a dataset and write the evaluated grid")
    p.add_argument("--input", required=True)
    p.add_argument("--loss", choices=["square", "line"], default="square")
    p.add_argument("--grid", nargs=2, type=int, metavar=("NY", "NX"), default=[101, 51])
    p.add_argument("--y-range", nargs=2, type=float, metavar=("LO", "HI"), help="response range (line loss)")
    p.add_argument("--project", action="store_true", help="clip negatives (and renormalize slices under line loss)")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("risk", help="minimax risk of a smoothness class")
    p.add_argument("--class", dest="cls", nargs="+", required=True, metavar="KIND_AND_PARAMS")
    p.add_argument("--Q", type=float)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--loss", choices=["square", "line"], default="line")
    p.add_argument("--design", default="uniform", help="'uniform' or an x,p CSV file")
    p.add_argument("--C", type=float, default=1.0, help="generic constant for bounded_spectrum")
    p.add_argument("--output")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("design", help="optimal design density")
    p.add_argument("--target", choices=["regression", "cdensity"], required=True)
    p.add_argument("--sigma-file")
    p.add_argument("--mass-file")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--output")
    p.set_defaults(func=cmd_design)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
