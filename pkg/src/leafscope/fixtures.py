"""Tiny synthetic leaf corpus for smoke tests and demos.

Each class gets a green leaf-like background with class-coloured blotches,
so a small network can separate the classes within a few steps.
"""

from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import ClassLabel

CLASS_DIRS = {
    ClassLabel.BacterialLeafSpot: "Bacterial Leaf Spot",
    ClassLabel.DownyMildew: "Downy Mildew",
    ClassLabel.HealthyLeaf: "Healthy Leaf",
    ClassLabel.MosaicDisease: "Mosaic Disease",
    ClassLabel.PowderyMildew: "Powdery Mildew",
}

_BLOTCH_COLORS = {
    ClassLabel.BacterialLeafSpot: (0.35, 0.18, 0.05),
    ClassLabel.DownyMildew: (0.85, 0.80, 0.15),
    ClassLabel.HealthyLeaf: (0.15, 0.55, 0.15),
    ClassLabel.MosaicDisease: (0.55, 0.85, 0.35),
    ClassLabel.PowderyMildew: (0.95, 0.95, 0.92),
}


def fixture_root():
    """Directory of the bundled 25-image corpus (5 per class)."""
    return Path(resources.files("leafscope") / "data" / "fixture_corpus")


def synthetic_leaf(label, side, rng):
    yy, xx = np.mgrid[0:side, 0:side] / side
    leaf = ((xx - 0.5) ** 2 / 0.2 + (yy - 0.5) ** 2 / 0.16) < 1
    img = np.empty((side, side, 3))
    img[:] = (0.30, 0.25, 0.20)
    img[leaf] = (0.10, 0.45, 0.12)
    color = np.asarray(_BLOTCH_COLORS[label])
    for _ in range(int(rng.integers(8, 12))):
        cy, cx = rng.uniform(0.25, 0.75, size=2)
        r = rng.uniform(0.10, 0.20)
        spot = ((yy - cy) ** 2 + (xx - cx) ** 2) < r ** 2
        img[spot & leaf] = color
    img += rng.normal(0, 0.03, img.shape)
    return (np.clip(img, 0, 1) * 255).round().astype(np.uint8)


def make_synthetic_corpus(root, per_class=5, side=64, seed=0):
    """Write ``per_class`` PNGs for each class under ``root/<class dir>/``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for label, dirname in CLASS_DIRS.items():
        d = root / dirname
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            Image.fromarray(synthetic_leaf(label, side, rng)).save(d / f"leaf_{i:03d}.png")
    return root
