"""Command-line entry point: nslqr-plots regret|scaling|compare."""

import argparse
import sys

from .errors import PlotsError
from .figures import plot_comparison, plot_regret_curves, plot_scaling


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nslqr-plots",
        description="Generate figures from nslqr sweep output directories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("regret", "mean cumulative-regret curves per controller"),
        ("scaling", "log-log regret scaling fit"),
        ("compare", "final-regret comparison chart"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--in", dest="results_dir", required=True,
                       help="sweep output directory containing results.csv")
        p.add_argument("--out", dest="out_path", required=True,
                       help="figure file to write (png or svg)")
        if name == "scaling":
            p.add_argument("--axis", choices=["T", "V_T"], default="T")

    args = parser.parse_args(argv)
    try:
        if args.command == "regret":
            info = plot_regret_curves(args.results_dir, args.out_path)
        elif args.command == "scaling":
            info = plot_scaling(args.results_dir, args.axis, args.out_path)
        else:
            info = plot_comparison(args.results_dir, args.out_path)
    except PlotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    detail = f", slope {info.slope:.4f} +/- {info.slope_se:.4f}" if info.slope is not None else ""
    print(f"wrote {info.path} ({info.series} series{detail})", file=sys.stderr)
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
