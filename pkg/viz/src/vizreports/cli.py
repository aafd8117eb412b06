"""Command line: render a report directory into SVG/PNG images plus index.html."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .bundle import SchemaError, load_bundle
from .render import render_report

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EMPTY = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viz-reports",
        description="Render exported spatio-temporal topic pattern reports to "
        "static images and a single HTML page.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render report.json (+trace/bench) from a directory")
    p_render.add_argument("--report", required=True, help="directory holding report.json")
    p_render.add_argument("--out", required=True, help="output directory")
    p_render.add_argument("--format", choices=("svg", "png"), default="svg")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    report_dir = Path(args.report)
    if not (report_dir / "report.json").exists():
        print(f"error: {report_dir / 'report.json'} not found", file=sys.stderr)
        return EXIT_USAGE
    try:
        bundle = load_bundle(report_dir)
    except (SchemaError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if bundle.is_empty():
        print("error: report has no components to render", file=sys.stderr)
        return EXIT_EMPTY
    written = render_report(bundle, args.out, fmt=args.format)
    print(f"rendered {len(written)} files into {args.out}")
    return EXIT_OK


def console_main() -> None:
    raise SystemExit(main())
