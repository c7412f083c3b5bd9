"""``gmbridge-plot``: render charts from gmbridge CSV artifacts."""

from __future__ import annotations

import argparse
import sys

from .plots import SchemaError, plot_convergence, plot_figure1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gmbridge-plot",
        description="Render loss-bound and convergence charts from gmbridge CSV files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p1 = sub.add_parser("figure1", help="errorbar chart of the loss bound vs order size")
    p1.add_argument("csv", help="path to figure1.csv")
    p1.add_argument("png", help="output image path")
    p2 = sub.add_parser("converge", help="occupation and KS convergence charts")
    p2.add_argument("csv_dir", help="directory holding occupation.csv and ks.csv")
    p2.add_argument("out_dir", help="directory for the output images")
    args = parser.parse_args(argv)
    try:
        if args.command == "figure1":
            plot_figure1(args.csv, args.png)
        else:
            plot_convergence(args.csv_dir, args.out_dir)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
