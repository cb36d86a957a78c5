"""Batch figure tool: one subcommand per figure kind.

Reads only the documented layerlab CSV/JSON schemas; on a schema violation
the process exits nonzero before any output file is written.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from layerplots.figures import (plot_bands, plot_optimality, plot_profiles,
                                plot_width_fit)
from layerplots.io import SchemaError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="layerplots",
        description="Figures from layerlab snapshot/report/sweep outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("profiles", help="u(r) curves over time")
    sp.add_argument("--in", dest="inp", type=Path, required=True,
                    help="snapshots.csv")
    sp.add_argument("--report", type=Path, default=None,
                    help="report.json (marks the level a and the interface)")
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("bands", help="band classification at the generation time")
    sp.add_argument("--in", dest="inp", type=Path, required=True,
                    help="report.json")
    sp.add_argument("--snapshots", type=Path, required=True,
                    help="snapshots.csv")
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("width-fit", help="log-log thickness scaling fit")
    sp.add_argument("--in", dest="inp", type=Path, required=True,
                    help="sweep.csv")
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("optimality", help="empirical b and t_min across the sweep")
    sp.add_argument("--in", dest="inp", type=Path, required=True,
                    help="sweep.csv")
    sp.add_argument("--out", type=Path, required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "profiles":
            info = plot_profiles(args.inp, args.out, args.report)
            print(f"profiles: {info['n_curves']} curves -> {args.out}")
        elif args.command == "bands":
            info = plot_bands(args.inp, args.snapshots, args.out)
            print(f"bands at t = {info['t_used']:.6g} -> {args.out}")
        elif args.command == "width-fit":
            info = plot_width_fit(args.inp, args.out)
            print(f"width-fit: slope={info['slope']:.3f} R2={info['R2']:g} "
                  f"C={info['C']:.4g} -> {args.out}")
        elif args.command == "optimality":
            info = plot_optimality(args.inp, args.out)
            print(f"optimality: {info['n']} points, b_max={info['b_max']:.3f} "
                  f"-> {args.out}")
        return 0
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
