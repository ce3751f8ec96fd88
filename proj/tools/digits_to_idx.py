#!/usr/bin/env python3
"""Convert the per-digit JSON files shipped in the npm `mnist` package into
standard IDX files (train-images-idx3-ubyte / train-labels-idx1-ubyte).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/digits_to_idx.py package/src/digits data/mnist
"""
import json
import struct
import sys
from pathlib import Path


def main(src: str, dst: str) -> None:
    src_dir, out = Path(src), Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    images, labels = [], []
    per_digit = []
    for d in range(10):
        flat = json.loads((src_dir / f"{d}.json").read_text())["data"]
        if len(flat) % 784:
            raise SystemExit(f"{d}.json: length {len(flat)} is not a multiple of 784")
        per_digit.append([flat[i:i + 784] for i in range(0, len(flat), 784)])
    # interleave classes so any prefix is roughly class balanced
    longest = max(len(p) for p in per_digit)
    for i in range(longest):
        for d in range(10):
            if i < len(per_digit[d]):
                images.append(bytes(min(255, max(0, round(v * 255))) for v in per_digit[d][i]))
                labels.append(d)
    n = len(images)
    with open(out / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for img in images:
            f.write(img)
    with open(out / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    main(sys.argv[1], sys.argv[2])
