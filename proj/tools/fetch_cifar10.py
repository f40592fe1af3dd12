#!/usr/bin/env python3
"""Fetch the CIFAR10 binary batches into <root>/cifar10/.

Needs outbound network access to the dataset mirror. In offline sandboxes
the toolkit falls back to the synthetic `shapes` task for 32x32 color
experiments; see README.
"""

import argparse
import pathlib
import sys
import tarfile
import urllib.request

URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default="data")
    args = ap.parse_args()

    dest = pathlib.Path(args.root) / "cifar10"
    dest.mkdir(parents=True, exist_ok=True)
    archive = dest / "cifar-10-binary.tar.gz"
    if not archive.exists():
        print(f"downloading {URL} ...", flush=True)
        urllib.request.urlretrieve(URL, archive)
    with tarfile.open(archive) as tf:
        for member in tf.getmembers():
            name = pathlib.Path(member.name).name
            if name.endswith(".bin"):
                member.name = name
                tf.extract(member, dest, filter="data")
    print(f"extracted CIFAR10 batches under {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
