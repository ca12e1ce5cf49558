"""Command line: plapdecay-plot <series.csv>... [--theory theory.csv]
[--summary summary.csv] -o out.png"""

from __future__ import annotations

import argparse
import sys

from .render import PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plapdecay-plot",
        description="Plot mass-decay curves (log-log) with an optional "
                    "theory-envelope overlay.")
    parser.add_argument("series", nargs="+", help="run series CSV files")
    parser.add_argument("--theory", help="theory table CSV for the overlay")
    parser.add_argument("--summary",
                        help="summary CSV supplying the fitted constant")
    parser.add_argument("-o", "--out", default="decay.png",
                        help="output image path (default decay.png)")
    parser.add_argument("--title")
    parser.add_argument("--sup-panel", action="store_true",
                        help="add a twin panel with the sup norm")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(series_paths=tuple(args.series), out_path=args.out,
                    theory_path=args.theory, summary_path=args.summary,
                    title=args.title, sup_panel=args.sup_panel)
    try:
        render(spec)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
