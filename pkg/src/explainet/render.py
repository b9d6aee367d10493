"""Dependency-free raster output: motif mosaics and match-score heatmaps.

Images are written as binary PGM (P5) / PPM (P6).  The config hash of
the producing run rides along as a header comment, which both formats
allow, keeping re-renders byte-identical for unchanged inputs.
"""

from __future__ import annotations

import colorsys
import hashlib

import numpy as np

from .motif import Background, FMotif, score_matrix


def _header(magic: str, w: int, h: int, comment: str | None) -> bytes:
    lines = [magic]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{w} {h}")
    lines.append("255")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_pgm(path, gray: np.ndarray, comment: str | None = None) -> None:
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {gray.shape}")
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(_header("P5", w, h, comment))
        f.write(np.clip(gray, 0, 255).astype(np.uint8).tobytes())


def write_ppm(path, rgb: np.ndarray, comment: str | None = None) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"PPM needs an [H, W, 3] array, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(_header("P6", w, h, comment))
        f.write(np.clip(rgb, 0, 255).astype(np.uint8).tobytes())


def read_pnm(path) -> np.ndarray:
    """Parse P5/P6 back into an array (testing aid, comments skipped)."""
    with open(path, "rb") as f:
        data = f.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    magic, w, h = fields[0], int(fields[1]), int(fields[2])
    body = np.frombuffer(data, dtype=np.uint8, offset=pos + 1)
    if magic == b"P5":
        return body.reshape(h, w)
    if magic == b"P6":
        return body.reshape(h, w, 3)
    raise ValueError(f"unsupported format {magic!r}")


def motif_color(motif_id: int) -> np.ndarray:
    """Stable saturated RGB for a motif id, hashed so neighbors differ."""
    digest = hashlib.sha256(f"motif-{motif_id}".encode()).digest()
    hue = digest[0] / 255.0
    val = 0.65 + 0.35 * digest[1] / 255.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, val)
    return np.array([int(255 * r), int(255 * g), int(255 * b)], dtype=np.uint8)


def mosaic(assignment: np.ndarray, cell: int = 8) -> np.ndarray:
    """Color each grid patch by its motif id; returns [H*cell, W*cell, 3]."""
    assignment = np.asarray(assignment)
    h, w = assignment.shape
    colors = {int(i): motif_color(int(i)) for i in np.unique(assignment)}
    out = np.zeros((h * cell, w * cell, 3), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            out[y * cell:(y + 1) * cell, x * cell:(x + 1) * cell] = \
                colors[int(assignment[y, x])]
    return out


def heatmap(image: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Superimpose per-position scores in [0,1] on a grayscale image.

    Scores are nearest-neighbor upsampled to the image size and drive
    the red channel; the image supplies the luminance base.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., 0]
    hi, wi = img.shape
    s = np.clip(np.asarray(scores, dtype=np.float64), 0.0, 1.0)
    ys = (np.arange(hi) * s.shape[0] // hi).clip(max=s.shape[0] - 1)
    xs = (np.arange(wi) * s.shape[1] // wi).clip(max=s.shape[1] - 1)
    up = s[np.ix_(ys, xs)]
    base = 255.0 * (img - img.min()) / max(img.max() - img.min(), 1e-12)
    out = np.stack([base, base, base], axis=-1)
    out[..., 0] = np.minimum(255.0, base + 200.0 * up)
    return out.astype(np.uint8)


def motif_match_scores(act_digits: np.ndarray, motifs: list[FMotif],
                       background: Background, motif_id: int) -> np.ndarray:
    """Match score of one motif at every grid position.

    `act_digits` is [H, W, width] quaternary digits of one sample level.
    """
    h, w, width = act_digits.shape
    target = [m for m in motifs if m.id == motif_id]
    if not target:
        raise ValueError(f"no motif with id {motif_id}")
    scores = score_matrix(act_digits.reshape(-1, width), target, background)
    return scores.reshape(h, w)
