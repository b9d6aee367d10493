"""IDX dataset ingestion and the deterministic minibatch pipeline.

The feed follows std -> aug -> mix -> iterate: images are standardized
with training-set statistics, each epoch draws fresh augmentation offsets
and a fresh shuffle from seeded substreams of the fold seed, and batches
come out of a plain generator.  Validation data is never augmented and
never contributes to the standardization statistics.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .rng import substream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxParseError(ValueError):
    pass


@dataclass
class IdxDataset:
    images: np.ndarray   # [N, H, W, 1] float32, byte units 0..255
    labels: np.ndarray   # [N] int
    name: str = "MNIST"

    def __len__(self):
        return len(self.labels)


@dataclass
class FeedConfig:
    pad: int = 3
    crop: int = 28
    hflip: bool = False
    batch_size: int = 128
    fold_seed: int = 1


def _read_be32(buf: bytes, off: int, what: str) -> int:
    if off + 4 > len(buf):
        raise IdxParseError(f"truncated header: missing {what}")
    return struct.unpack_from(">I", buf, off)[0]


def load_idx(images_path, labels_path, name: str = "MNIST",
             num_classes: int = 10) -> IdxDataset:
    with open(images_path, "rb") as f:
        buf = f.read()
    magic = _read_be32(buf, 0, "image magic")
    if magic != IDX_IMAGES_MAGIC:
        raise IdxParseError(f"{images_path}: bad image magic 0x{magic:08x}")
    n = _read_be32(buf, 4, "image count")
    h = _read_be32(buf, 8, "row count")
    w = _read_be32(buf, 12, "column count")
    if len(buf) - 16 != n * h * w:
        raise IdxParseError(f"{images_path}: truncated payload, "
                            f"expected {n * h * w} pixels, got {len(buf) - 16}")
    images = np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(n, h, w, 1)

    with open(labels_path, "rb") as f:
        lbuf = f.read()
    magic = _read_be32(lbuf, 0, "label magic")
    if magic != IDX_LABELS_MAGIC:
        raise IdxParseError(f"{labels_path}: bad label magic 0x{magic:08x}")
    ln = _read_be32(lbuf, 4, "label count")
    if len(lbuf) - 8 != ln:
        raise IdxParseError(f"{labels_path}: truncated payload")
    if ln != n:
        raise IdxParseError(f"image count {n} != label count {ln}")
    labels = np.frombuffer(lbuf, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.max(initial=0) >= num_classes:
        raise IdxParseError(f"{labels_path}: label {labels.max()} out of range "
                            f"for {num_classes} classes")
    return IdxDataset(images.astype(np.float32), labels, name)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path):
    """Write a dataset in the IDX container (byte images)."""
    imgs = np.clip(np.asarray(images), 0, 255).astype(np.uint8)
    n, h, w = imgs.shape[:3]
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(imgs.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def channel_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = images.mean(axis=(0, 1, 2))
    sigma = images.std(axis=(0, 1, 2))
    if np.any(sigma == 0):
        raise ValueError("zero per-channel standard deviation")
    return mu, sigma


def standardize(images: np.ndarray, mu: np.ndarray | None = None,
                sigma: np.ndarray | None = None):
    """Standardize per channel; validation reuses training mu/sigma."""
    if mu is None or sigma is None:
        mu, sigma = channel_stats(images)
    return (images - mu) / sigma, mu, sigma


def augment_batch(images: np.ndarray, cfg: FeedConfig,
                  gen: np.random.Generator) -> np.ndarray:
    """Zero-pad then random-crop each image; optional horizontal mirror.

    Crop offsets are uniform over [0, 2*pad]^2; offset (pad, pad)
    reproduces the original image.
    """
    n, h, w, c = images.shape
    p = cfg.pad
    if cfg.hflip:
        flips = gen.random(n) < 0.5
        images = np.where(flips[:, None, None, None], images[:, :, ::-1, :], images)
    padded = np.pad(images, ((0, 0), (p, p), (p, p), (0, 0)))
    offs = gen.integers(0, 2 * p + 1, size=(n, 2))
    out = np.empty((n, cfg.crop, cfg.crop, c), dtype=images.dtype)
    for i in range(n):
        oy, ox = offs[i]
        out[i] = padded[i, oy:oy + cfg.crop, ox:ox + cfg.crop, :]
    return out


class MinibatchFeed:
    """Single-owner iterator over augmented, shuffled minibatches.

    All randomness comes from the "shuffle" and "augment" substreams of
    the fold seed; constructing a feed twice with the same seed replays
    the identical batch sequence.
    """

    def __init__(self, images: np.ndarray, labels: np.ndarray, cfg: FeedConfig,
                 dtype=np.float32):
        self.images = images.astype(dtype)
        self.labels = labels
        self.cfg = cfg
        self._shuffle = substream(cfg.fold_seed, "shuffle")
        self._augment = substream(cfg.fold_seed, "augment")

    def epoch(self):
        order = self._shuffle.permutation(len(self.labels))
        bs = self.cfg.batch_size
        for i in range(0, len(order), bs):
            idx = order[i:i + bs]
            xb = augment_batch(self.images[idx], self.cfg, self._augment)
            yield xb, self.labels[idx]
