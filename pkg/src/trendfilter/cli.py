"""
Command-line interface. Every subcommand writes CSV (or one ``key=value`` line).

Exit status: 0 on success, 2 on a usage error (bad flag, missing file,
nonpositive parameter), 3 on a numerical failure. Grid subcommands evaluate
cells on a thread pool whose size may be set with ``TRENDFILTER_THREADS``;
rows are always written in grid order.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalConditioningError, PrecisionError
from .inference import crb_horizon, fisher_info, mle_fit
from .kalman import KalmanState, kalman_filter
from .likelihood import loglik_direct, loglik_kalman, loglik_recursive
from .misspec import (
    MisspecConfig,
    detection_threshold,
    filter_variance_asym,
    positive_trend_prob,
    residual_variance_asym,
    terminal_mc,
)
from .model import MarketParams, TrendParams, simulate

THREADS_ENV = "TRENDFILTER_THREADS"
GRID_NAMES = ("lambda", "sigma_mu")
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return format(float(x), ".15g")


@dataclass(frozen=True)
class GridSpec:
    """One grid axis: ``steps`` points from ``lo`` to ``hi`` inclusive, linear or log spaced."""

    name: str
    lo: float
    hi: float
    steps: int
    log: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"grid {self.name}: min must be below max")
        if self.steps < 2:
            raise ValueError(f"grid {self.name}: need at least 2 steps")
        if self.lo <= 0:
            raise ValueError(f"grid {self.name}: values must be positive")

    def values(self) -> np.ndarray:
        if self.log:
            return np.geomspace(self.lo, self.hi, self.steps)
        return np.linspace(self.lo, self.hi, self.steps)


def parse_grid(text: str) -> tuple[GridSpec, GridSpec]:
    """
    Parse ``lambda=LO:HI:STEPS[:log],sigma_mu=LO:HI:STEPS[:log]``.

    Both axes are required; the returned pair is always (lambda, sigma_mu).
    """
    axes = {}
    for part in text.split(","):
        name, sep, body = part.strip().partition("=")
        name = name.strip()
        if not sep or name not in GRID_NAMES:
            raise ValueError(f"bad grid axis {part!r}; expected lambda=... or sigma_mu=...")
        if name in axes:
            raise ValueError(f"grid axis {name} given twice")
        fields = body.split(":")
        if len(fields) not in (3, 4) or (len(fields) == 4 and fields[3] not in ("log", "lin")):
            raise ValueError(f"bad grid range {body!r}; expected MIN:MAX:STEPS[:log]")
        try:
            lo, hi, steps = float(fields[0]), float(fields[1]), int(fields[2])
        except ValueError:
            raise ValueError(f"bad grid range {body!r}") from None
        axes[name] = GridSpec(name, lo, hi, steps, len(fields) == 4 and fields[3] == "log")
    missing = [n for n in GRID_NAMES if n not in axes]
    if missing:
        raise ValueError(f"grid is missing axis {missing[0]}")
    return axes["lambda"], axes["sigma_mu"]


def _grid_arg(text: str):
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (x > 0 and np.isfinite(x)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return x


def _count(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return n


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return min(8, os.cpu_count() or 1)


def grid_map(func, grid: tuple[GridSpec, GridSpec]) -> list[tuple[float, float, tuple]]:
    """Evaluate ``func(lambda, sigma_mu)`` over the grid; rows sorted by (lambda, sigma_mu)."""
    cells = [(float(lam), float(sig)) for lam in grid[0].values() for sig in grid[1].values()]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda cell: func(*cell), cells))
    rows = [(lam, sig, res) for (lam, sig), res in zip(cells, results)]
    rows.sort(key=lambda row: (row[0], row[1]))
    return rows


# ---------------------------------------------------------------- csv io


def write_csv(path, header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    text = buf.getvalue()
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_series(path) -> tuple[np.ndarray | None, np.ndarray]:
    """Read columns ``t`` (optional) and ``y`` from a CSV with a header row."""
    try:
        text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or "y" not in reader.fieldnames:
        raise UsageError(f"{path}: header must contain a 'y' column")
    t, y = [], []
    try:
        for row in reader:
            y.append(float(row["y"]))
            if "t" in row:
                t.append(float(row["t"]))
    except (TypeError, ValueError):
        raise UsageError(f"{path}: non-numeric value on data row {len(y) + 1}")
    if not y:
        raise UsageError(f"{path}: no data rows")
    return (np.array(t) if len(t) == len(y) else None), np.array(y)


# ---------------------------------------------------------------- parser


def _add_market(p, with_trend=True):
    if with_trend:
        p.add_argument("--lambda", dest="lambda_mu", type=_positive, required=True, help="mean-reversion rate (1/year)")
        p.add_argument("--sigma-mu", type=_positive, required=True, help="trend volatility (1/year)")
    p.add_argument("--sigma-s", type=_positive, required=True, help="spot volatility (1/sqrt(year))")
    p.add_argument("--delta", type=_positive, default=1.0 / 252.0, help="observation step in years (default 1/252)")


def _add_star(p):
    p.add_argument("--lambda-star", type=_positive, required=True, help="true mean-reversion rate")
    p.add_argument("--sigma-mu-star", type=_positive, required=True, help="true trend volatility")


def _add_grid(p):
    p.add_argument(
        "--grid",
        type=_grid_arg,
        required=True,
        help="parameter grid, e.g. lambda=0.5:5:10,sigma_mu=0.1:0.9:9 (append :log for log spacing)",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trendfilter", description="OU trend filtering toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one path; CSV t,mu,y")
    _add_market(p)
    p.add_argument("--n", type=_count, required=True, help="number of steps")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.add_argument("--path-index", type=int, default=0, help="path index within the seed (default 0)")
    p.add_argument("--stationary-start", action="store_true", help="draw mu_0 from the stationary law")
    p.add_argument("--out", default="-", help="output file (default stdout)")

    p = sub.add_parser("filter", help="Kalman-filter a series; CSV t,y,mu_hat,gamma")
    _add_market(p)
    p.add_argument("--in", dest="inp", required=True, help="input CSV with a y column")
    p.add_argument("--stationary-start", action="store_true", help="start from the stationary prior")
    p.add_argument("--out", default="-", help="output file (default stdout)")

    p = sub.add_parser("loglik", help="exact log-likelihood; prints loglik=<v> method=<m>")
    _add_market(p)
    p.add_argument("--in", dest="inp", required=True, help="input CSV with a y column")
    p.add_argument(
        "--method", choices=("direct", "recursive", "kalman"), default="kalman", help="likelihood route (default kalman)"
    )

    p = sub.add_parser("fit", help="maximum likelihood; CSV lambda_hat,sigma_mu_hat,loglik,converged")
    _add_market(p, with_trend=False)
    p.add_argument("--in", dest="inp", required=True, help="input CSV with a y column")
    p.add_argument("--init-lambda", type=_positive, default=1.0, help="starting lambda (default 1)")
    p.add_argument("--init-sigma-mu", type=_positive, default=0.5, help="starting sigma_mu (default 0.5)")
    p.add_argument("--max-iter", type=_count, default=500, help="simplex iterations (default 500)")
    p.add_argument("--out", default="-", help="output file (default stdout)")

    p = sub.add_parser("crb", help="Cramer-Rao horizons over a grid; CSV lambda,sigma_mu,T_lambda_x,T_sigma_x")
    _add_market(p, with_trend=False)
    _add_grid(p)
    p.add_argument("--target", type=_positive, default=0.5, help="target std on lambda (default 0.5)")
    p.add_argument("--target-sigma", type=_positive, default=None, help="target std on sigma_mu (default --target)")
    p.add_argument("--out", default="-", help="output file (default stdout)")

    p = sub.add_parser("misspec", help="residual std over believed parameters; CSV lambda,sigma_mu,residual_std")
    _add_star(p)
    _add_market(p, with_trend=False)
    _add_grid(p)
    p.add_argument("--out", default="-", help="output file (default stdout)")

    p = sub.add_parser("detect", help="P(trend > 0 | estimate = x) over a grid; CSV lambda,sigma_mu,prob")
    p.add_argument("--lambda-star", type=_positive, help="true mean-reversion rate (not with --well-specified)")
    p.add_argument("--sigma-mu-star", type=_positive, help="true trend volatility (not with --well-specified)")
    _add_market(p, with_trend=False)
    _add_grid(p)
    p.add_argument("--x", type=float, default=None, help="estimate level (default: stationary filter std per cell)")
    p.add_argument(
        "--well-specified",
        action="store_true",
        help="grid runs over the true parameters and the agent uses them",
    )
    p.add_argument("--out", default="-", help="output file (default stdout)")

    p = sub.add_parser("mc-check", help="Monte Carlo vs closed-form stationary std of residual and filter")
    _add_star(p)
    _add_market(p)
    p.add_argument("--horizon", type=_positive, default=30.0, help="years per path (default 30)")
    p.add_argument("--paths", type=_count, default=10000, help="number of paths (default 10000)")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.add_argument("--out", default="-", help="output file (default stdout)")
    return ap


# ---------------------------------------------------------------- commands


def _market(args) -> MarketParams:
    return MarketParams.from_values(args.lambda_mu, args.sigma_mu, args.sigma_s, args.delta)


def cmd_simulate(args):
    params = _market(args)
    path = simulate(params, args.n, args.seed, args.stationary_start, args.path_index)
    write_csv(args.out, ("t", "mu", "y"), zip(path.t, path.mu, path.y))


def cmd_filter(args):
    params = _market(args)
    t, y = read_series(args.inp)
    if t is None:
        t = params.delta * np.arange(1, y.size + 1)
    init = KalmanState.stationary(params) if args.stationary_start else KalmanState()
    res = kalman_filter(y, params, init)
    write_csv(args.out, ("t", "y", "mu_hat", "gamma"), zip(t, y, res.mu_hat, res.gamma))


def cmd_loglik(args):
    params = _market(args)
    _, y = read_series(args.inp)
    func = {"direct": loglik_direct, "recursive": loglik_recursive, "kalman": loglik_kalman}[args.method]
    try:
        val = func(y, params)
    except ValueError as exc:
        raise UsageError(str(exc))
    sys.stdout.write(f"loglik={fmt(val)} method={args.method}\n")


def cmd_fit(args):
    _, y = read_series(args.inp)
    init = TrendParams(args.init_lambda, args.init_sigma_mu)
    try:
        res = mle_fit(y, args.sigma_s, args.delta, init, max_iter=args.max_iter)
    except ValueError as exc:
        raise UsageError(str(exc))
    if res.at_boundary:
        sys.stderr.write("warning: estimate at the parameter bound; data may carry no trend signal\n")
    row = (res.params.lambda_mu, res.params.sigma_mu, res.loglik, res.converged)
    write_csv(args.out, ("lambda_hat", "sigma_mu_hat", "loglik", "converged"), [row])


def cmd_crb(args):
    x_lam = args.target
    x_sig = args.target_sigma if args.target_sigma is not None else args.target

    def cell(lam, sig):
        params = MarketParams.from_values(lam, sig, args.sigma_s, args.delta)
        info = fisher_info(params)
        return (
            crb_horizon(params, x_lam, "lambda", info=info),
            crb_horizon(params, x_sig, "sigma_mu", info=info),
        )

    rows = [(lam, sig, *res) for lam, sig, res in grid_map(cell, args.grid)]
    write_csv(args.out, ("lambda", "sigma_mu", "T_lambda_x", "T_sigma_x"), rows)


def cmd_misspec(args):
    star = TrendParams(args.lambda_star, args.sigma_mu_star)

    def cell(lam, sig):
        return residual_variance_asym(MisspecConfig(star, TrendParams(lam, sig), args.sigma_s)) ** 0.5

    rows = [(lam, sig, res) for lam, sig, res in grid_map(cell, args.grid)]
    write_csv(args.out, ("lambda", "sigma_mu", "residual_std"), rows)


def cmd_detect(args):
    if args.well_specified:
        if args.lambda_star is not None or args.sigma_mu_star is not None:
            raise UsageError("--well-specified takes the true parameters from the grid; drop --lambda-star/--sigma-mu-star")
        star = None
    else:
        if args.lambda_star is None or args.sigma_mu_star is None:
            raise UsageError("--lambda-star and --sigma-mu-star are required unless --well-specified")
        star = TrendParams(args.lambda_star, args.sigma_mu_star)

    def cell(lam, sig):
        theta = TrendParams(lam, sig)
        cfg = MisspecConfig(theta if star is None else star, theta, args.sigma_s)
        x = detection_threshold(cfg) if args.x is None else args.x
        return positive_trend_prob(cfg, x)

    rows = [(lam, sig, res) for lam, sig, res in grid_map(cell, args.grid)]
    write_csv(args.out, ("lambda", "sigma_mu", "prob"), rows)


def cmd_mc_check(args):
    cfg = MisspecConfig.from_values(args.lambda_star, args.sigma_mu_star, args.lambda_mu, args.sigma_mu, args.sigma_s)
    res, filt = terminal_mc(cfg, args.delta, args.horizon, args.paths, args.seed)
    if res.short_horizon:
        sys.stderr.write("warning: horizon too short for the stationary formulas\n")
    rows = [
        ("residual_std", residual_variance_asym(cfg) ** 0.5, res.std, res.std_se),
        ("filter_std", filter_variance_asym(cfg) ** 0.5, filt.std, filt.std_se),
    ]
    lines = ["quantity,closed_form,estimate,se,z,short_horizon"]
    for name, closed, est, se in rows:
        z = (est - closed) / se
        lines.append(",".join([name, fmt(closed), fmt(est), fmt(se), fmt(z), fmt(res.short_horizon)]))
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "loglik": cmd_loglik,
    "fit": cmd_fit,
    "crb": cmd_crb,
    "misspec": cmd_misspec,
    "detect": cmd_detect,
    "mc-check": cmd_mc_check,
}


def run(argv=None) -> int:
    """Parse ``argv`` and execute; returns the exit status instead of exiting."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"trendfilter {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except BrokenPipeError:
        raise
    except OSError as exc:
        sys.stderr.write(f"trendfilter {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (PrecisionError, NumericalConditioningError, ArithmeticError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"trendfilter {args.command}: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    return 0


def main():
    try:
        status = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        status = 1
    sys.exit(status)
