"""Rendered-digit surrogate dataset.

This environment has no access to the usual handwritten-digit downloads,
so experiments that need a 10-class 28x28 grayscale task render one:
digit glyphs from the system's TrueType fonts with random scale,
rotation, shift, stroke weight, blur and pixel noise, written out in the
same IDX container the real datasets use.  The task is learnable to
comparable accuracy and exercises the identical pipeline surface.
"""

from __future__ import annotations

import glob
import os
from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

from .data import write_idx
from .rng import substream

_FONT_DIRS = [
    "/usr/share/fonts/truetype/dejavu",
    "/usr/share/fonts/truetype",
]


@lru_cache(maxsize=1)
def _font_paths() -> tuple[str, ...]:
    paths: list[str] = []
    for d in _FONT_DIRS:
        paths.extend(sorted(glob.glob(os.path.join(d, "*.ttf"))))
        if paths:
            break
    try:
        import matplotlib
        mdir = os.path.join(os.path.dirname(matplotlib.__file__),
                            "mpl-data", "fonts", "ttf")
        paths.extend(p for p in sorted(glob.glob(os.path.join(mdir, "DejaVu*.ttf"))))
    except ImportError:
        pass
    if not paths:
        raise RuntimeError("no TrueType fonts found for digit rendering")
    # a handful of faces keeps per-class appearance about as varied as
    # handwriting; dozens of styles would make the task much harder
    return tuple(dict.fromkeys(paths))[:6]


@lru_cache(maxsize=256)
def _font(path: str, size: int):
    return ImageFont.truetype(path, size)


def _render_one(digit: int, gen: np.random.Generator) -> np.ndarray:
    canvas = 40
    img = Image.new("L", (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    font = _font(_font_paths()[gen.integers(len(_font_paths()))],
                 int(gen.integers(22, 34)))
    text = str(digit)
    x0, y0, x1, y1 = draw.textbbox((0, 0), text, font=font)
    cx = (canvas - (x1 - x0)) / 2 - x0
    cy = (canvas - (y1 - y0)) / 2 - y0
    draw.text((cx, cy), text, fill=255, font=font)
    angle = gen.uniform(-8, 8)
    img = img.rotate(angle, resample=Image.BILINEAR, expand=False)
    if gen.random() < 0.25:
        img = img.filter(ImageFilter.GaussianBlur(radius=gen.uniform(0.3, 0.5)))
    shift = gen.integers(-2, 3, size=2)
    left = (canvas - 28) // 2 + shift[0]
    top = (canvas - 28) // 2 + shift[1]
    img = img.crop((left, top, left + 28, top + 28))
    arr = np.asarray(img, dtype=np.float32)
    arr *= gen.uniform(0.8, 1.0)
    arr += gen.normal(0, 3.0, size=arr.shape)
    return np.clip(arr, 0, 255)


def make_dataset(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """n rendered digits as ([n, 28, 28, 1] float32 bytes, [n] labels)."""
    gen = substream(seed, "digits")
    labels = gen.integers(0, 10, size=n)
    images = np.empty((n, 28, 28, 1), dtype=np.float32)
    for i, d in enumerate(labels):
        images[i, :, :, 0] = _render_one(int(d), gen)
    return images, labels.astype(np.int64)


def write_surrogate(out_dir, n_train: int = 60000, n_val: int = 10000,
                    seed: int = 20240901) -> dict[str, str]:
    """Render train/val splits into IDX files under out_dir; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train_images": os.path.join(out_dir, "train-images-idx3-ubyte"),
        "train_labels": os.path.join(out_dir, "train-labels-idx1-ubyte"),
        "val_images": os.path.join(out_dir, "t10k-images-idx3-ubyte"),
        "val_labels": os.path.join(out_dir, "t10k-labels-idx1-ubyte"),
    }
    if all(os.path.exists(p) for p in paths.values()):
        return paths
    xtr, ytr = make_dataset(n_train, seed)
    xva, yva = make_dataset(n_val, seed + 1)
    write_idx(xtr, ytr, paths["train_images"], paths["train_labels"])
    write_idx(xva, yva, paths["val_images"], paths["val_labels"])
    return paths
