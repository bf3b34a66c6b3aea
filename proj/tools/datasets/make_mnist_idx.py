#!/usr/bin/env python3
"""Write the 10,000 MNIST digits bundled in the npm ``mnist`` package as IDX files.

The npm package (``mnist@1.1.0``) stores each class as a flat JSON array of
pixel intensities already divided by 255 and rounded to three decimals. The
original bytes are recovered with ``round(v * 255)``. Samples are interleaved
across classes (0,1,...,9,0,1,...) until every class is exhausted, so the file
order is not sorted by label.

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 make_mnist_idx.py package/src/digits data/mnist
"""

import json
import os
import struct
import sys

SIDE = 28


def main():
    digits_dir, out_dir = sys.argv[1], sys.argv[2]
    per_class = []
    for label in range(10):
        with open(os.path.join(digits_dir, f"{label}.json")) as f:
            flat = json.load(f)["data"]
        count = len(flat) // (SIDE * SIDE)
        images = [bytes(min(255, max(0, round(v * 255)))
                        for v in flat[i * SIDE * SIDE:(i + 1) * SIDE * SIDE])
                  for i in range(count)]
        per_class.append(images)

    images, labels = [], []
    cursor = [0] * 10
    while any(cursor[c] < len(per_class[c]) for c in range(10)):
        for c in range(10):
            if cursor[c] < len(per_class[c]):
                images.append(per_class[c][cursor[c]])
                labels.append(c)
                cursor[c] += 1

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), SIDE, SIDE))
        for img in images:
            f.write(img)
    with open(os.path.join(out_dir, "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {out_dir}")


if __name__ == "__main__":
    main()
