"""Batch renderer: one panel per invocation.

Exit codes: 0 success, 2 bad input (schema mismatch, unknown kind, bad
selection or flag).
"""

import argparse
import sys

from tripodfigures.panels import KINDS, PanelSpec, render
from tripodfigures.schemas import SchemaError

EXIT_OK = 0
EXIT_CONFIG = 2


def _parse_select(pairs):
    select = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ValueError(f"--select takes key=value, got {pair!r}")
        select[key.strip()] = float(raw)
    return select


def _parse_range(text):
    if text is None:
        return None
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"ranges take lo:hi, got {text!r}")
    return (float(lo), float(hi))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripodfig",
        description="Render a figure panel from tripodsim CSV files",
    )
    parser.add_argument("inputs", nargs="+", help="input CSV file(s)")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="image output path")
    parser.add_argument("--title", default="")
    parser.add_argument("--x-label", default=None)
    parser.add_argument("--y-label", default=None)
    parser.add_argument("--x-range", default=None, help="lo:hi")
    parser.add_argument("--y-range", default=None, help="lo:hi")
    parser.add_argument("--color-cap", type=float, default=None,
                        help="color scale ceiling (field maps default to 0.3)")
    parser.add_argument("--select", action="append", metavar="KEY=VALUE",
                        help="dataset row filter: tau, B, or chi (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        panel = PanelSpec(
            kind=args.kind,
            inputs=tuple(args.inputs),
            title=args.title,
            x_label=args.x_label,
            y_label=args.y_label,
            x_range=_parse_range(args.x_range),
            y_range=_parse_range(args.y_range),
            color_cap=args.color_cap,
            select=_parse_select(args.select),
        )
        image, sidecar = render(panel, args.out)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {image}, {sidecar}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
