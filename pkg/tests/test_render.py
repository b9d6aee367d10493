import numpy as np
import pytest

from explainet.motif import Background, FMotif, one_hot, match_score
from explainet.render import (heatmap, mosaic, motif_color,
                              motif_match_scores, read_pnm, write_pgm,
                              write_ppm)

UNIFORM = Background(np.full(4, 0.25))


def test_pgm_roundtrip(tmp_path):
    img = np.arange(48, dtype=np.uint8).reshape(6, 8)
    p = tmp_path / "x.pgm"
    write_pgm(p, img, comment="config abc123")
    back = read_pnm(p)
    assert (back == img).all()
    assert b"# config abc123" in p.read_bytes()


def test_ppm_roundtrip(tmp_path):
    gen = np.random.default_rng(0)
    img = gen.integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
    p = tmp_path / "x.ppm"
    write_ppm(p, img)
    assert (read_pnm(p) == img).all()


def test_write_rejects_bad_shapes(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "a", np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        write_ppm(tmp_path / "b", np.zeros((2, 2)))


def test_render_idempotent_bytes(tmp_path):
    img = np.zeros((4, 4), dtype=np.uint8)
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    write_pgm(a, img, comment="h")
    write_pgm(b, img, comment="h")
    assert a.read_bytes() == b.read_bytes()


def test_motif_colors_stable_and_distinct():
    c0 = motif_color(0)
    assert (motif_color(0) == c0).all()
    distinct = {tuple(motif_color(i)) for i in range(32)}
    assert len(distinct) > 24


def test_mosaic_cells_take_motif_color():
    grid = np.array([[0, 1], [1, 0]])
    img = mosaic(grid, cell=4)
    assert img.shape == (8, 8, 3)
    assert (img[0, 0] == motif_color(0)).all()
    assert (img[0, 7] == motif_color(1)).all()
    assert (img[:4, :4] == img[4:, 4:]).all()


def test_heatmap_shape_and_score_channel():
    img = np.zeros((28, 28))
    scores = np.zeros((4, 4))
    scores[0, 0] = 1.0
    out = heatmap(img, scores)
    assert out.shape == (28, 28, 3)
    assert out[0, 0, 0] > out[0, 0, 1]          # score drives red
    assert (out[14:, 14:] == 0).all()           # zero score, black base


def test_motif_match_scores_grid():
    gen = np.random.default_rng(1)
    motifs = [FMotif(ppm=gen.dirichlet(np.ones(4), size=8), sites=1.0, id=i)
              for i in range(3)]
    digits = gen.integers(0, 4, size=(4, 4, 8))
    grid = motif_match_scores(digits, motifs, UNIFORM, motif_id=2)
    assert grid.shape == (4, 4)
    assert grid[1, 2] == pytest.approx(
        match_score(one_hot(digits[1, 2]), motifs[2], UNIFORM))
    with pytest.raises(ValueError):
        motif_match_scores(digits, motifs, UNIFORM, motif_id=9)
