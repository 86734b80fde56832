"""Command-line entry point: ``nestor run | slope | plot | problems``."""

import argparse
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import (ESTIMATORS, ExperimentConfig, fit_slope, geometric_grid, read_csv, run_study,
                    write_csv)
from .errors import GuardrailError, InsufficientDataError, UsageError
from .plotting import KINDS, emit_plot
from .problems import list_problems

CONFIG_KEYS = {"problem_id", "problem", "estimator", "eps_grid", "eps", "reps", "delta", "seed",
               "kappa", "min_charge", "output_dir", "out", "workers", "allow_expensive",
               "step_budget"}
ALIASES = {"problem": "problem_id", "eps": "eps_grid", "out": "output_dir"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def load_config(path):
    """Read the ``[experiment]`` table of a TOML file."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    table = data.get("experiment")
    if not isinstance(table, dict):
        raise UsageError(f"{path}: missing [experiment] table")
    unknown = set(table) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
    return {ALIASES.get(k, k): v for k, v in table.items()}


def build_config(args):
    values = load_config(args.config) if args.config else {}
    flags = {"problem_id": args.problem, "estimator": args.estimator, "eps_grid": args.eps,
             "reps": args.reps, "seed": args.seed, "output_dir": args.out, "delta": args.delta,
             "kappa": args.kappa, "workers": args.workers}
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.allow_expensive:
        values["allow_expensive"] = True
    for key in ("problem_id", "estimator"):
        if key not in values:
            raise UsageError(f"missing {key.replace('_id', '')} (flag or config)")
    values.setdefault("eps_grid", geometric_grid())
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def cmd_run(args):
    config = build_config(args)
    rows = run_study(config)
    os.makedirs(config.output_dir, exist_ok=True)
    stem = os.path.join(config.output_dir, f"{config.problem_id}_{config.estimator}")
    write_csv(rows, stem + ".csv")
    emit_plot(rows, "rmse_vs_eps", stem + "_rmse.svg")
    emit_plot(rows, "cost_vs_eps", stem + "_cost.svg")
    for r in rows:
        print(f"eps={r.eps:<8g} rmse={r.empirical_rmse:.4g} bias={r.empirical_bias:+.3g} "
              f"steps={r.classical_steps_mean:.4g} charged={r.quantum_charged:.4g}")
    print(f"wrote {stem}.csv")
    return 0


def cmd_slope(args):
    rows = read_csv(args.csv)
    slope, r2 = fit_slope(rows, args.cost_col, args.log_power)
    print(f"slope={slope:.6f} r2={r2:.6f}")
    return 0


def cmd_plot(args):
    emit_plot(read_csv(args.csv), args.kind, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_problems(args):
    print("\n".join(list_problems()))
    return 0


def make_parser():
    p = _Parser(prog="nestor", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a convergence study")
    run.add_argument("--config")
    run.add_argument("--problem", choices=None)
    run.add_argument("--estimator", choices=ESTIMATORS)
    run.add_argument("--eps", type=float, nargs="+")
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--delta", type=float)
    run.add_argument("--kappa", type=float)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    run.add_argument("--allow-expensive", action="store_true")
    run.set_defaults(func=cmd_run)

    slope = sub.add_parser("slope", help="fit a log-log cost slope")
    slope.add_argument("--csv", required=True)
    slope.add_argument("--cost-col", required=True,
                       choices=("classical_steps_mean", "quantum_charged"))
    slope.add_argument("--log-power", type=int, default=0)
    slope.set_defaults(func=cmd_slope)

    plot = sub.add_parser("plot", help="draw an SVG chart from a study CSV")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--kind", required=True, choices=KINDS)
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plot)

    probs = sub.add_parser("problems", help="list registered problems")
    probs.set_defaults(func=cmd_problems)
    return p


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, GuardrailError, InsufficientDataError) as exc:
        print(f"nestor: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"nestor: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
