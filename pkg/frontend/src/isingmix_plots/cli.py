"""Command line for rendering figures from isingmix CSV files."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="isingmix-plots",
        description="Render figures from isingmix sweep / lan-check CSV output.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser(
        "render", help="render one figure",
        description="variance_curve and estimator_comparison consume the sweep "
                    "schema (beta,m,inv_I0_ij,inv_Ibeta_ij,amle_var_ij); "
                    "lan_scatter consumes the lan-check per-replication schema "
                    "(rep,llr,score_term,predicted). Output format follows the "
                    "file extension (png/svg).")
    sp.add_argument("--input", required=True, help="input CSV")
    sp.add_argument("--kind", choices=KINDS, required=True)
    sp.add_argument("--out", required=True, help="output image (png or svg)")
    sp.add_argument("--scale", action="store_true",
                    help="normalize variance curves by their beta=0 value")
    sp.add_argument("--xlabel")
    sp.add_argument("--ylabel")
    sp.add_argument("--title")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(input_csv=args.input, kind=args.kind, output_path=args.out,
                    xlabel=args.xlabel, ylabel=args.ylabel, title=args.title,
                    scale=args.scale)
    try:
        render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return 3
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
