#!/usr/bin/env python3
# Copyright 2026 The LCFD Authors.
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
"""Builds the bundled toy corpus from scikit-image's sample photographs.

Writes binary PPM files under data/:
  toy/train/    30 crops of 128x128
  toy/heldout/  24 crops of 128x128 (disjoint grid cells from the same sources)
  natural/      6 odd-sized photos for round-trip tests
"""
import argparse
import os

import numpy as np
from skimage import data, transform

SOURCES = {
    "astronaut": lambda: data.astronaut(),
    "chelsea": lambda: data.chelsea(),
    "coffee": lambda: data.coffee(),
    "hubble": lambda: data.hubble_deep_field(),
    "ihc": lambda: data.immunohistochemistry(),
    "motorcycle": lambda: data.stereo_motorcycle()[0],
    "retina": lambda: (transform.rescale(data.retina(), 0.5, channel_axis=2,
                                         anti_aliasing=True) * 255).round().astype(np.uint8),
    "rocket": lambda: data.rocket(),
}

NATURAL_CROPS = [
    ("astronaut", 0, 100, 301, 257),
    ("chelsea", 0, 0, 300, 451),
    ("coffee", 60, 101, 257, 383),
    ("rocket", 40, 200, 255, 321),
    ("motorcycle", 100, 200, 233, 350),
    ("ihc", 128, 128, 256, 256),
]


def write_ppm(path, img):
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--seed", type=int, default=2022)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    # At most 7 grid cells per source so no single photo dominates.
    images = {name: load()[..., :3] for name, load in SOURCES.items()}
    picked = []
    for name, img in images.items():
        h, w, _ = img.shape
        cells = [(name, y, x) for y in range(0, h - 127, 128)
                 for x in range(0, w - 127, 128)]
        picked += [cells[i] for i in rng.permutation(len(cells))[:7]]
    picked = [picked[i] for i in rng.permutation(len(picked))[:54]]

    for sub, chunk in (("train", picked[:30]), ("heldout", picked[30:])):
        d = os.path.join(args.out, "toy", sub)
        os.makedirs(d, exist_ok=True)
        for k, (name, y, x) in enumerate(chunk):
            write_ppm(os.path.join(d, "%02d_%s.ppm" % (k, name)),
                      images[name][y:y + 128, x:x + 128])

    d = os.path.join(args.out, "natural")
    os.makedirs(d, exist_ok=True)
    for name, y, x, h, w in NATURAL_CROPS:
        write_ppm(os.path.join(d, "%s_%dx%d.ppm" % (name, w, h)),
                  images[name][y:y + h, x:x + w])


if __name__ == "__main__":
    main()
