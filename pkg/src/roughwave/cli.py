"""Command-line entry point.

    roughwave <kind> [--config FILE] [--set key=value]... [--out DIR]
              [--seed N] [--workers N]

Exit codes: 0 success, 2 configuration/validation error, 3 numeric failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, load_config
from .errors import NumericError, ValidationError
from .experiments import run


def build_parser():
    ap = argparse.ArgumentParser(prog="roughwave", description=__doc__)
    ap.add_argument("kind", choices=KINDS, help="experiment kind to run")
    ap.add_argument("--config", help="flat key=value configuration file")
    ap.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="master seed (u64)")
    ap.add_argument("--workers", type=int, help="parallel replica workers")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            print(f"roughwave: --set expects KEY=VALUE, got '{item}'", file=sys.stderr)
            return 2
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    overrides["kind"] = args.kind
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = str(args.seed)
    if args.workers is not None:
        overrides["workers"] = str(args.workers)

    try:
        cfg = load_config(args.config, overrides)
        outputs = run(cfg)
    except ValidationError as err:
        print(f"roughwave: configuration error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"roughwave: numeric failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"roughwave: i/o failure: {err}", file=sys.stderr)
        return 4
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
