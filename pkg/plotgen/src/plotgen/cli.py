"""Command line front end: plotgen <kind> --in table.csv --out figure.png

Exit codes: 0 rendered, 2 usage, schema or input error (the schema
report includes the expected and found headers).
"""

from __future__ import annotations

import argparse
import sys

from .figures import EXPECTED_HEADERS, FigureSpec, SchemaError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotgen",
        description="Render a figure from an emech CSV export. The file's "
                    "header must match the chosen kind.")
    parser.add_argument("kind", choices=sorted(EXPECTED_HEADERS),
                        help="figure family, fixing the expected CSV schema")
    parser.add_argument("--in", dest="source", required=True,
                        help="input CSV (its .json sidecar is read if present)")
    parser.add_argument("--out", required=True,
                        help="output image path (.png, .pdf or .svg)")
    parser.add_argument("--title", default=None)
    parser.add_argument("--xlabel", default=None)
    parser.add_argument("--ylabel", default=None)
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        spec = FigureSpec(kind=args.kind, source=args.source, out=args.out,
                          title=args.title, xlabel=args.xlabel,
                          ylabel=args.ylabel, dpi=args.dpi)
        out = render(spec)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out} (+ .json sidecar)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
