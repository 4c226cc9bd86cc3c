"""Command line entry point: plots <kind> --in DIR --out FILE."""

import argparse
import sys

from .render import KINDS, FigureSpec, render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render figures from quasishadow experiment artifacts")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="artifact directory")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output image file (.png or .svg)")
    parser.add_argument("--dpi", type=int, default=150)
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    try:
        render(FigureSpec(kind=args.kind, in_dir=args.in_dir,
                          out_path=args.out_path, dpi=args.dpi))
    except (FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
