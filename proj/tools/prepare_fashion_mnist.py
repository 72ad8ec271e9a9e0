#!/usr/bin/env python3
# Copyright 2026 The dropscale Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds gzipped IDX files from the per-class JSON dumps of the npm
`fashion-mnist` package (`npm pack fashion-mnist`).

Each class dump holds that class's 1000 test images followed by its 6000
training images; empty placeholder entries are skipped. Both files are shuffled with a fixed seed so classes interleave.
"""
import argparse
import gzip
import json
import pathlib
import random
import struct

ROWS = COLS = 28
TRAIN_PER_CLASS = 6000
TEST_PER_CLASS = 1000


def write_idx(prefix, images, labels, out_dir):
    img_path = out_dir / f"{prefix}-images-idx3-ubyte.gz"
    lbl_path = out_dir / f"{prefix}-labels-idx1-ubyte.gz"
    with gzip.GzipFile(img_path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(images), ROWS, COLS))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(lbl_path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package_dir", type=pathlib.Path,
                    help="unpacked npm package root (contains src/clothes)")
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--train-count", type=int, default=10000,
                    help="number of training images to keep (0 = all 60000)")
    ap.add_argument("--seed", type=int, default=20200408)
    args = ap.parse_args()

    train, test = [], []
    for label in range(10):
        path = args.package_dir / "src" / "clothes" / f"{label}.json"
        data = [img for img in json.loads(path.read_text())["data"] if img]
        if len(data) != TRAIN_PER_CLASS + TEST_PER_CLASS:
            raise SystemExit(f"{path}: {len(data)} images")
        for img in data:
            if len(img) != ROWS * COLS or min(img) < 0 or max(img) > 255:
                raise SystemExit(f"{path}: malformed image")
        test += [(img, label) for img in data[:TEST_PER_CLASS]]
        train += [(img, label) for img in data[TEST_PER_CLASS:]]

    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)
    if args.train_count:
        train = train[:args.train_count]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx("train", [i for i, _ in train], [l for _, l in train], args.out_dir)
    write_idx("t10k", [i for i, _ in test], [l for _, l in test], args.out_dir)


if __name__ == "__main__":
    main()
