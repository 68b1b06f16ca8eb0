#!/usr/bin/env python3
# Copyright 2026 The tbvi Authors. Licensed under the Apache License, Version 2.0.
"""Convert Omniglot PNG folders to 28x28 IDX image files.

    omniglot_to_idx.py --background images_background --evaluation images_evaluation --out data

Writes omniglot-train-images.idx3-ubyte (background alphabets) and
omniglot-test-images.idx3-ubyte (evaluation alphabets). Strokes are dark on
a light page in the source, so intensities are inverted to ink = 255.
"""

import argparse
import struct
import sys
from pathlib import Path

from PIL import Image

SIDE = 28


def images_under(root):
    paths = sorted(p for p in Path(root).rglob("*.png"))
    if not paths:
        sys.exit(f"no PNG files under {root}")
    return paths


def to_bytes(path):
    with Image.open(path) as img:
        gray = img.convert("L").resize((SIDE, SIDE), Image.Resampling.LANCZOS)
        return bytes(255 - v for v in gray.tobytes())


def write_idx(paths, out):
    with open(out, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(paths), SIDE, SIDE))
        for p in paths:
            f.write(to_bytes(p))
    print(f"wrote {out} ({len(paths)} images)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--background", required=True, help="images_background directory (train split)")
    ap.add_argument("--evaluation", required=True, help="images_evaluation directory (test split)")
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(images_under(args.background), out / "omniglot-train-images.idx3-ubyte")
    write_idx(images_under(args.evaluation), out / "omniglot-test-images.idx3-ubyte")


if __name__ == "__main__":
    main()
