"""Command-line interface mirroring ExportSpec.

Exit codes: 0 success, 2 bad arguments/spec, 1 export failure (backbone
retrieval, inference, or I/O).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ExportError
from .export import export_features
from .spec import ExportSpec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aift-export",
        description="Export backbone features with augmentations to AIFT v1.",
    )
    parser.add_argument("--backbone", required=True,
                        help="model family or 'stub:<dim>'")
    parser.add_argument("--dataset", required=True,
                        help="directory with images.idx/labels.idx")
    parser.add_argument("--out", required=True, help="output .aift path")
    parser.add_argument("--aug", default="identity",
                        help="augmentation name or 'composite:<a>+<b>'")
    parser.add_argument("--overrides", default="{}",
                        help="JSON augmentation parameter overrides")
    parser.add_argument("--s-file", type=int, default=3, dest="s_file")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch-size", type=int, default=64,
                        dest="batch_size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = json.loads(args.overrides)
        if not isinstance(overrides, dict):
            raise ExportError("--overrides must be a JSON object")
        spec = ExportSpec(
            backbone=args.backbone, dataset=args.dataset, output=args.out,
            augmentation=args.aug, overrides=overrides, s_file=args.s_file,
            device=args.device, seed=args.seed, batch_size=args.batch_size,
        )
    except (ExportError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        path = export_features(spec)
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
