import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def smooth_image(h, w, seed=0):
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    r = np.random.default_rng(seed)
    chans = []
    for c in range(3):
        a, b, p = r.uniform(2, 7), r.uniform(2, 7), r.uniform(0, 3)
        chans.append(0.5 + 0.3 * np.sin(a * xx + p) * np.cos(b * yy - p))
    return np.stack(chans)


def to_u8(img):
    return np.floor(np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def write_pairs(root, n=3, h=64, w=64, darken=0.25, seed=0, names=None):
    """Synthetic LOL-style layout: <root>/low/*.png and <root>/high/*.png."""
    root = Path(root)
    (root / "low").mkdir(parents=True, exist_ok=True)
    (root / "high").mkdir(parents=True, exist_ok=True)
    names = names or [f"{i:03d}.png" for i in range(n)]
    for i, name in enumerate(names):
        gt = smooth_image(h, w, seed + i)
        Image.fromarray(to_u8(gt)).save(root / "high" / name)
        Image.fromarray(to_u8(gt * darken)).save(root / "low" / name)
    return root


@pytest.fixture
def pair_root(tmp_path):
    return write_pairs(tmp_path / "data")
