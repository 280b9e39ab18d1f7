"""prep: convert public archives to the canonical dataset format and verify
canonical directories.

Exit codes: 0 success / verification passed, 1 verification failed,
2 usage error, 3 conversion impossible.
"""

from __future__ import annotations

import argparse
import json
import sys

from .convert import ConversionError, convert
from .manifest import MANIFESTS
from .verify import verify


def cmd_convert(args) -> int:
    build = MANIFESTS[args.dataset]
    try:
        manifest = build(
            window_len=args.window_len, window_mode=args.mode, overlap=args.overlap
        )
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = convert(manifest, args.src, args.out)
    except ConversionError as exc:
        print(f"conversion failed: {exc}", file=sys.stderr)
        return 3
    print(
        f"converted {report.samples_kept} trials "
        f"({len(report.dropped)} dropped, {len(report.unparseable_files)} unparseable); "
        f"classes: {len(report.per_class_counts)}; output: {args.out}"
    )
    return 0


def cmd_verify(args) -> int:
    report = verify(args.path)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a source archive to the canonical format")
    p.add_argument("--dataset", required=True, choices=sorted(MANIFESTS))
    p.add_argument("--src", required=True, help="source archive root directory")
    p.add_argument("--out", required=True, help="output canonical directory")
    p.add_argument("--window-len", type=int, default=64, dest="window_len")
    p.add_argument("--mode", choices=("resample", "sliding"), default="resample")
    p.add_argument("--overlap", type=float, default=0.5, help="sliding-window overlap fraction")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("verify", help="re-validate a canonical dataset directory")
    p.add_argument("path")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
