"""Command-line front end: ``corrbreak <command> [--flag value]...``."""

from __future__ import annotations

import argparse
import csv
import io
import os
import secrets
import sys
from datetime import date, timedelta
from pathlib import Path

from . import changetest, powersim
from .changetest import NullLaw
from .eigen import ConvergenceError, EigenError
from .panel import PanelError, ReturnPanel, load_panel, standardize, to_returns, write_panel

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; usage errors here map to 1
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(x: float) -> str:
    return f"{x:.6g}"


def _selector(text: str) -> str | int:
    if text in changetest.SELECTORS:
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"selector must be largest, smallest or an index, got {text!r}")


def _alpha(text: str) -> float:
    a = float(text)
    if not 0.0 < a < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return a


def _spec_from(args) -> tuple[powersim.AlternativeSpec, str]:
    if args.segments:
        return powersim.AlternativeSpec.parse(args.segments), args.segments
    if args.rho is not None:
        return powersim.AlternativeSpec(((1.0, args.rho),)), f"rho={fmt(args.rho)}"
    return powersim.preset(args.preset), str(args.preset)


def _seed(args, err) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbelow(2**31)
    print(f"seed: {seed}", file=err)
    return seed


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", type=int, default=None, help="alternative 1..5")
    g.add_argument("--segments", help='custom regimes, e.g. "0.5:0.5,0.5:0.7" (fraction:rho)')
    g.add_argument("--rho", type=float, default=None, help="single-regime constant correlation")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corrbreak", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run the break test on a CSV panel")
    t.add_argument("--input", required=True)
    t.add_argument("--output", help="trajectory file; .csv writes t,h,critical, anything else JSON")
    t.add_argument("--alpha", type=_alpha, default=0.05)
    t.add_argument("--t-min", type=int, default=None)
    t.add_argument("--selector", type=_selector, default=None)
    t.add_argument("--returns", choices=("as-is", "log-diff", "pct-diff"), default="as-is")
    t.add_argument("--means", choices=("prefix", "full"), default="prefix")
    t.add_argument("--method", choices=("closed", "jacobi"), default="closed")
    t.add_argument("--seed", type=int, default=0, help="seed for q>1 critical values")

    s = sub.add_parser("simulate", help="size-adjusted rejection frequency (one power-table row)")
    _add_spec_flags(s)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--reps", type=int, default=2000, help="replications per phase")
    s.add_argument("--n-null", type=int, default=None)
    s.add_argument("--n-alt", type=int, default=None)
    s.add_argument("--t-min", type=int, default=None)
    s.add_argument("--selector", type=_selector, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--output", help="append the row to this CSV file")
    s.add_argument("--no-header", action="store_true")

    g = sub.add_parser("sample", help="write a synthetic bivariate panel")
    _add_spec_flags(g)
    g.add_argument("--T", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--output", help="CSV path (default stdout)")
    g.add_argument("--start-date", type=date.fromisoformat, default=None,
                   help="label rows with consecutive business days from this date")

    c = sub.add_parser("critical-value", help="critical value of |h| under the null law")
    c.add_argument("--alpha", type=_alpha, required=True)
    c.add_argument("--lambda", dest="lam", type=float, required=True)
    c.add_argument("--q", type=int, default=1)
    c.add_argument("--mc-reps", type=int, default=changetest.DEFAULT_MC_REPS)
    c.add_argument("--seed", type=int, default=0)

    n = sub.add_parser("null-pdf", help="null density at ordered h values")
    n.add_argument("--lambda", dest="lam", type=float, required=True)
    n.add_argument("--h", required=True, help="comma-separated values, descending; q = count")

    sub.add_parser("presets", help="list the five alternatives")
    return parser


def _business_days(start: date, n: int) -> list[str]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += timedelta(days=1)
    return out


def cmd_test(args, out, err) -> int:
    panel = to_returns(load_panel(args.input), args.returns)
    traj = changetest.trajectory(
        standardize(panel),
        alpha=args.alpha,
        t_min=args.t_min,
        selector=args.selector,
        method=args.method,
        means=args.means,
        seed=args.seed,
    )
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            if Path(args.output).suffix.lower() == ".csv":
                changetest.write_csv(traj, fh)
            else:
                changetest.write_json(traj, fh)
    where = f"t={traj.argmax_t}"
    if traj.argmax_label:
        where += f" ({traj.argmax_label})"
    verdict = "reject" if traj.reject else "accept"
    print(
        f"{verdict}: max|h|={fmt(traj.max_abs_h)} at {where}, "
        f"critical={fmt(traj.critical)} (alpha={fmt(traj.alpha)}, lambda={fmt(traj.lam)}, q={traj.q})",
        file=out,
    )
    return EXIT_OK


def cmd_simulate(args, out, err) -> int:
    spec, label = _spec_from(args)
    seed = _seed(args, err)
    n_null = args.n_null or args.reps
    n_alt = args.n_alt or args.reps
    res = powersim.power_study(
        spec, args.T, args.alpha, n_null, n_alt, seed, t_min=args.t_min, selector=args.selector
    )
    row = [args.T, label, fmt(args.alpha), n_null, n_alt, fmt(res.frequency), fmt(res.mc_stderr), seed]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not args.no_header:
        w.writerow(powersim.POWER_COLUMNS)
    w.writerow(row)
    out.write(buf.getvalue())
    if args.output:
        new = not os.path.exists(args.output) or os.path.getsize(args.output) == 0
        with open(args.output, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(powersim.POWER_COLUMNS)
            w.writerow(row)
    return EXIT_OK


def cmd_sample(args, out, err) -> int:
    spec, _ = _spec_from(args)
    seed = _seed(args, err)
    panel = powersim.sample_panel(spec, args.T, seed)
    if args.start_date:
        panel = ReturnPanel(panel.observations, panel.names, _business_days(args.start_date, args.T))
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_panel(panel, fh)
    else:
        write_panel(panel, out)
    return EXIT_OK


def cmd_critical_value(args, out, err) -> int:
    law = NullLaw(args.lam, args.q)
    print(fmt(changetest.critical_value(args.alpha, law, args.mc_reps, args.seed)), file=out)
    return EXIT_OK


def cmd_null_pdf(args, out, err) -> int:
    try:
        h = [float(x) for x in args.h.split(",")]
    except ValueError:
        raise UsageError(f"--h must be comma-separated numbers, got {args.h!r}") from None
    print(fmt(changetest.null_pdf(h, NullLaw(args.lam, len(h)))), file=out)
    return EXIT_OK


def cmd_presets(args, out, err) -> int:
    for i, spec in enumerate(powersim.presets(), start=1):
        segs = ", ".join(f"({fmt(f)}, {fmt(r)})" for f, r in spec.segments)
        print(f"{i}: {segs}", file=out)
    return EXIT_OK


COMMANDS = {
    "test": cmd_test,
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "critical-value": cmd_critical_value,
    "null-pdf": cmd_null_pdf,
    "presets": cmd_presets,
}


def run(argv: list[str] | None = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=err)
        print(exc, file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        print(f"corrbreak: error: {exc}", file=err)
        return EXIT_USAGE
    except changetest.ConfigError as exc:
        print(f"corrbreak: error: {exc}", file=err)
        return EXIT_USAGE
    except (PanelError, EigenError, ConvergenceError, OSError) as exc:
        where = f"{args.input}: " if getattr(args, "input", None) else ""
        print(f"corrbreak: {where}{exc}", file=err)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
