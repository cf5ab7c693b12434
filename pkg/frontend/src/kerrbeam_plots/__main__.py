"""CLI: python -m kerrbeam_plots fig1|fig2 --spec <file>."""

from __future__ import annotations

import argparse
import sys

from .csvio import MissingColumnError
from .figures import plot_fig1, plot_fig2
from .spec import SpecError, load_spec


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kerrbeam_plots")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fig1", "fig2"):
        p = sub.add_parser(name)
        p.add_argument("--spec", required=True, help="figure spec file")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        if spec.kind != args.command:
            raise SpecError(
                f"{args.spec}: spec kind {spec.kind!r} does not match "
                f"command {args.command!r}")
        result = (plot_fig1 if args.command == "fig1" else plot_fig2)(spec)
    except (SpecError, MissingColumnError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result.svg_path)
    print(result.png_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
