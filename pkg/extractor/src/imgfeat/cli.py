"""Command line: extract features from a manifest of images.

    extract --manifest items.csv --out features.bin --bins 32 \
            --backbone resnet18

Writes the binary feature file, an HSV histogram table next to it
(`<out>.hsv.tsv` unless --hsv-out is given), and an index->id map
(`<out>.items.txt`).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cnn import BACKBONES
from .extract import extract_rows
from .featfile import write_feature_file, write_hsv_table, write_id_map
from .manifest import ManifestError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extract",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")
    ex = sub.add_parser("extract")
    for target in (parser, ex):
        target.add_argument("--manifest", help="CSV of item_id,image_path")
        target.add_argument("--out", help="feature file to write")
        target.add_argument("--bins", type=int, default=32)
        target.add_argument("--backbone", default="resnet18",
                            choices=sorted(BACKBONES))
        target.add_argument("--hsv-out", default=None)
        target.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.manifest or not args.out:
        print("error: --manifest and --out are required", file=sys.stderr)
        return 2
    if args.bins < 2:
        print("error: --bins must be at least 2", file=sys.stderr)
        return 2
    try:
        rows = extract_rows(args.manifest, bins=args.bins,
                            backbone=args.backbone, seed=args.seed)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_file(rows, out)
    hsv_out = Path(args.hsv_out) if args.hsv_out else out.with_suffix(
        out.suffix + ".hsv.tsv"
    )
    write_hsv_table(rows, hsv_out)
    write_id_map(rows, out.with_suffix(out.suffix + ".items.txt"))
    dim = len(rows[0].cnn) + len(rows[0].aesthetic)
    print(f"wrote {len(rows)} items x {dim} dims to {out}")
    print(f"hsv table: {hsv_out}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
