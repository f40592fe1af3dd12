#!/usr/bin/env python3
"""Fetch the MNIST sample corpus and write canonical idx files.

Pulls the `mnist` npm package (which embeds 10,000 real MNIST digits as
JSON), splits each class 80/20 into train/test in stored order, and writes

    <root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte

Usage: fetch_mnist.py [--root data] [--tarball mnist-1.1.0.tgz]
"""

import argparse
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile


def write_idx(root: pathlib.Path, prefix: str, samples: list[tuple[bytes, int]]) -> None:
    root.mkdir(parents=True, exist_ok=True)
    with open(root / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with open(root / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default="data", help="dataset cache root")
    ap.add_argument("--tarball", default="", help="pre-downloaded mnist npm tarball")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tarball = args.tarball
        if not tarball:
            print("fetching npm package 'mnist' ...", flush=True)
            subprocess.run(["npm", "pack", "mnist"], cwd=tmp, check=True,
                           stdout=subprocess.DEVNULL)
            tarball = next(pathlib.Path(tmp).glob("mnist-*.tgz"))
        with tarfile.open(tarball) as tf:
            tf.extractall(tmp, filter="data")
        digits_dir = pathlib.Path(tmp) / "package/src/digits"

        train: list[tuple[bytes, int]] = []
        test: list[tuple[bytes, int]] = []
        for digit in range(10):
            flat = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
            n = len(flat) // 784
            images = [
                bytes(round(v * 255) for v in flat[i * 784:(i + 1) * 784]) for i in range(n)
            ]
            cut = (n * 4) // 5
            train += [(img, digit) for img in images[:cut]]
            test += [(img, digit) for img in images[cut:]]

    root = pathlib.Path(args.root) / "mnist"
    write_idx(root, "train", train)
    write_idx(root, "t10k", test)
    print(f"wrote {len(train)} train / {len(test)} test samples under {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
