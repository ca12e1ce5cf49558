"""Command line front end.

Verbs:
    run <plan.toml> [--keep-going]
    theory <model.toml> --t 10,100,1000 [--out theory.csv]
    fit <series.csv> [--window a,b]
    c0 --p 3 --theta 1 [--samples 100000] [--seed 0]
"""

from __future__ import annotations

import argparse
import sys

from .harness import (ConfigError, fit_decay_exponent, parse_config,
                      parse_model_file, run_experiment, theory_report)
from .integrate import DecaySeries
from .theory import find_coercivity_constant


def _cmd_run(args) -> int:
    plan = parse_config(args.plan)
    rows = run_experiment(plan)
    failed = 0
    for row in rows:
        if row.error:
            failed += 1
            print(f"{row.label}: FAILED {row.error}")
        else:
            print(f"{row.label}: verdict={row.verdict} slope={row.slope:.4g} "
                  f"M(end)/M(0)={row.mass_final / row.mass_initial:.3e}"
                  + (f" [{row.finding}]" if row.finding else ""))
    print(f"wrote {plan.output_dir / 'summary.csv'}")
    if failed and not args.keep_going:
        return 1
    return 0


def _cmd_theory(args) -> int:
    model = parse_model_file(args.model)
    t_list = [float(v) for v in args.t.split(",") if v.strip()]
    if not t_list:
        raise ConfigError("--t needs at least one time")
    theory_report(model, t_list, out_path=args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_fit(args) -> int:
    series = DecaySeries.from_csv(args.series)
    if args.window:
        t_lo, t_hi = (float(v) for v in args.window.split(","))
    else:
        t_hi = float(series.t[-1])
        t_lo = t_hi / 10.0
    slope, stderr = fit_decay_exponent(series, t_lo, t_hi)
    print(f"slope={slope!r} stderr={stderr!r} window=[{t_lo:g},{t_hi:g}]")
    return 0


def _cmd_c0(args) -> int:
    value = find_coercivity_constant(args.p, args.theta, args.samples,
                                     args.seed)
    print(repr(value))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plapdecay",
        description="Simulate graph diffusion with absorption and check the "
                    "decay-rate envelopes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a plan file")
    p_run.add_argument("plan")
    p_run.add_argument("--keep-going", action="store_true",
                       help="exit 0 even if some rows failed")
    p_run.set_defaults(func=_cmd_run)

    p_theory = sub.add_parser("theory", help="tabulate rate quantities")
    p_theory.add_argument("model")
    p_theory.add_argument("--t", required=True,
                          help="comma-separated list of times")
    p_theory.add_argument("--out", default="theory.csv")
    p_theory.set_defaults(func=_cmd_theory)

    p_fit = sub.add_parser("fit", help="fit a decay exponent to a series")
    p_fit.add_argument("series")
    p_fit.add_argument("--window", help="t_lo,t_hi (default: last decade)")
    p_fit.set_defaults(func=_cmd_fit)

    p_c0 = sub.add_parser(
        "c0", help="estimate the strong-monotonicity constant")
    p_c0.add_argument("--p", type=float, required=True)
    p_c0.add_argument("--theta", type=float, required=True)
    p_c0.add_argument("--samples", type=int, default=100_000)
    p_c0.add_argument("--seed", type=int, default=0)
    p_c0.set_defaults(func=_cmd_c0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
