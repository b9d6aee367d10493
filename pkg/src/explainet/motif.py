"""Feature-motif discovery over aligned quaternary sequences.

A motif is a position-specific probability matrix (PPM) over the
4-symbol alphabet, the same object molecular biology uses for sequence
motifs.  Discovery runs seeded online EM on a two-component mixture
(motif vs. position-independent background) over full-width aligned
sequences, accepts a motif when its expected site count clears the
floor, erases the sequences it explains, and repeats up to the motif
cap.

Matching uses the energy-normalized correlation of a one-hot sequence
against the rectified log-odds of the PPM; with aligned equal-width
inputs the correlation reduces to the zero-lag dot product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ldf import digits_to_letters

PPM_PSEUDOCOUNT = 0.1
SEED_EPSILON = 0.3
ERASE_RESPONSIBILITY = 0.5


@dataclass
class Background:
    probs: np.ndarray  # 4-vector, strictly positive, sums to 1

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (4,) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"invalid background distribution {p}")
        self.probs = p


@dataclass
class FMotif:
    ppm: np.ndarray          # [width, 4], rows sum to 1
    sites: float             # expected occurrence count in the corpus
    level: int = 0
    id: int = 0
    converged: bool = True

    def __post_init__(self):
        self.ppm = np.asarray(self.ppm, dtype=np.float64)
        if self.ppm.ndim != 2 or self.ppm.shape[1] != 4:
            raise ValueError(f"PPM must be [width, 4], got {self.ppm.shape}")
        if np.any(np.abs(self.ppm.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("PPM rows must sum to 1")

    @property
    def width(self) -> int:
        return self.ppm.shape[0]

    def rect_log_odds(self, background: Background) -> np.ndarray:
        """relu(log PPM - log background); -inf from zero cells clips to 0."""
        with np.errstate(divide="ignore"):
            lo = np.log(self.ppm) - np.log(background.probs)
        return np.maximum(lo, 0.0)


@dataclass
class DiscoveryConfig:
    k_motifs: int = 96
    n_sites: int = 200
    width: int = 8
    n_half: int = 2
    batch_size: int = 4096
    pseudocount: float = PPM_PSEUDOCOUNT
    fraction_init: float = 0.05
    step_kappa: float = 0.7
    step_t0: float = 10.0
    min_epochs: int = 2
    max_epochs: int = 40
    tol: float = 1e-3
    max_fraction: float = 0.5


# ---------------------------------------------------------------- background

def estimate_background(sequences: np.ndarray,
                        counts: np.ndarray | None = None) -> Background:
    """Global digit frequencies with a pseudocount of 1 per symbol."""
    seqs = np.asarray(sequences)
    if seqs.size == 0:
        raise ValueError("empty sequence corpus")
    if counts is None:
        counts = np.ones(len(seqs), dtype=np.int64)
    tallies = np.zeros(4, dtype=np.float64)
    for sym in range(4):
        tallies[sym] = ((seqs == sym).sum(axis=1) * counts).sum()
    tallies += 1.0
    return Background(tallies / tallies.sum())


# ------------------------------------------------------------------- seeding

def _kmer_ids(seqs: np.ndarray, pos: int, k: int) -> np.ndarray:
    ids = np.zeros(len(seqs), dtype=np.int64)
    for j in range(k):
        ids = ids * 4 + seqs[:, pos + j]
    return ids


def seed_candidates(sequences: np.ndarray, counts: np.ndarray,
                    background: Background, cfg: DiscoveryConfig,
                    top: int = 8) -> list[np.ndarray]:
    """Initial PPMs from enriched gapped k-mers.

    Enumerates every placement of two n_half-grams (possibly adjacent),
    ranks (placement, symbols) by observed/expected frequency ratio, and
    expands the top seeds into PPMs: (1 - eps) on seeded symbols with
    eps/3 elsewhere, background rows on unseeded positions.
    """
    seqs = np.asarray(sequences)
    w = seqs.shape[1]
    nh = cfg.n_half
    if nh >= (w + 1) // 2:
        raise ValueError(f"n_half {nh} too large for width {w}")
    total = counts.sum()
    if total == 0:
        raise ValueError("empty sequence corpus")
    scored: list[tuple[float, int, int, int]] = []
    n_combo = 4 ** (2 * nh)
    logb = np.log(background.probs)
    for p1 in range(0, w - 2 * nh + 1):
        for p2 in range(p1 + nh, w - nh + 1):
            combo = _kmer_ids(seqs, p1, nh) * (4 ** nh) + _kmer_ids(seqs, p2, nh)
            freq = np.bincount(combo, weights=counts, minlength=n_combo) / total
            # expected frequency of each symbol string under the background
            digits = (np.arange(n_combo)[:, None] >>
                      (2 * np.arange(2 * nh - 1, -1, -1))) & 3
            expected = np.exp(logb[digits].sum(axis=1))
            ratio = freq / expected
            for cid in np.argsort(-ratio, kind="stable")[:top]:
                if freq[cid] > 0:
                    scored.append((float(ratio[cid]), p1, p2, int(cid)))
    scored.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
    seeds = []
    for _, p1, p2, cid in scored[:top]:
        ppm = np.tile(background.probs, (w, 1))
        digits = [(cid >> (2 * (2 * nh - 1 - j))) & 3 for j in range(2 * nh)]
        positions = list(range(p1, p1 + nh)) + list(range(p2, p2 + nh))
        for pos, sym in zip(positions, digits):
            row = np.full(4, SEED_EPSILON / 3.0)
            row[sym] = 1.0 - SEED_EPSILON
            ppm[pos] = row
        seeds.append(ppm)
    return seeds


# ----------------------------------------------------------------- online EM

def _log_likelihoods(seqs: np.ndarray, ppm: np.ndarray,
                     background: Background) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore"):
        logp = np.log(ppm)
    pos = np.arange(seqs.shape[1])
    ll_motif = logp[pos, seqs].sum(axis=1)
    ll_bg = np.log(background.probs)[seqs].sum(axis=1)
    return ll_motif, ll_bg


def _responsibilities(seqs, ppm, background, pi):
    ll_m, ll_b = _log_likelihoods(seqs, ppm, background)
    d = np.log(pi) + ll_m - (np.log1p(-pi) + ll_b)
    return 1.0 / (1.0 + np.exp(-d))


def online_em_fit(sequences: np.ndarray, counts: np.ndarray, seed_ppm: np.ndarray,
                  background: Background, cfg: DiscoveryConfig) -> FMotif:
    """Stochastic EM for the motif-vs-background mixture.

    E-step computes per-sequence motif responsibilities; the M-step
    blends minibatch sufficient statistics into the running estimate
    with step size (t + t0)^(-kappa).  Returns the fitted motif with
    sites = sum of responsibilities over the weighted corpus; the
    converged flag drops when the PPM is still moving at the epoch cap.
    """
    seqs = np.asarray(sequences)
    if seqs.shape[1] != seed_ppm.shape[0]:
        raise ValueError("sequence width does not match seed PPM width")
    ppm = seed_ppm.copy()
    pi = cfg.fraction_init
    t = 0
    converged = False
    for epoch in range(cfg.max_epochs):
        prev = ppm.copy()
        for lo in range(0, len(seqs), cfg.batch_size):
            batch = seqs[lo:lo + cfg.batch_size]
            bc = counts[lo:lo + cfg.batch_size].astype(np.float64)
            r = _responsibilities(batch, ppm, background, pi)
            wr = r * bc
            denom = wr.sum()
            eta = (t + cfg.step_t0) ** (-cfg.step_kappa)
            t += 1
            if denom > 0:
                stats = np.zeros_like(ppm)
                for sym in range(4):
                    stats[:, sym] = (wr[:, None] * (batch == sym)).sum(axis=0)
                stats += cfg.pseudocount
                stats /= stats.sum(axis=1, keepdims=True)
                ppm = (1.0 - eta) * ppm + eta * stats
            pi_batch = denom / bc.sum()
            # capping the mixing fraction keeps the motif component from
            # drifting into the global distribution and claiming the
            # whole corpus in one accept-erase round
            pi = float(np.clip((1.0 - eta) * pi + eta * pi_batch,
                               1e-6, cfg.max_fraction))
        if epoch + 1 >= cfg.min_epochs and np.abs(ppm - prev).max() < cfg.tol:
            converged = True
            break
    r = _responsibilities(seqs, ppm, background, pi)
    sites = float((r * counts).sum())
    return FMotif(ppm=ppm, sites=sites, converged=converged)


def discover_motifs(sequences: np.ndarray, counts: np.ndarray,
                    cfg: DiscoveryConfig, level: int = 0) -> list[FMotif]:
    """Iterative seed -> EM -> accept-and-erase loop, at most k_motifs.

    After accepting a motif, sequences whose responsibility exceeds 0.5
    leave the corpus; discovery stops early when a fit falls below the
    site floor or the corpus empties.
    """
    seqs = np.asarray(sequences).copy()
    cnts = np.asarray(counts).copy()
    background = estimate_background(seqs, cnts)
    motifs: list[FMotif] = []
    while len(motifs) < cfg.k_motifs and len(seqs) > 0:
        if cnts.sum() < cfg.n_sites:
            break
        seeds = seed_candidates(seqs, cnts, background, cfg, top=3)
        if not seeds:
            break
        best: FMotif | None = None
        for seed in seeds:
            fit = online_em_fit(seqs, cnts, seed, background, cfg)
            if best is None or fit.sites > best.sites:
                best = fit
        if best is None or best.sites < cfg.n_sites:
            break
        best.level = level
        best.id = len(motifs)
        motifs.append(best)
        r = _responsibilities(seqs, best.ppm, background, _pi_from(best, cnts))
        keep = r <= ERASE_RESPONSIBILITY
        if keep.all():
            break  # nothing erased; a repeat fit would loop forever
        seqs, cnts = seqs[keep], cnts[keep]
    return motifs


def _pi_from(motif: FMotif, counts: np.ndarray) -> float:
    total = float(counts.sum())
    return float(np.clip(motif.sites / max(total, 1.0), 1e-6, 1.0 - 1e-6))


# ------------------------------------------------------------------ matching

def one_hot(seqs: np.ndarray) -> np.ndarray:
    """[.., width] digits -> [.., width, 4] one-hot reals."""
    seqs = np.asarray(seqs)
    return np.eye(4)[seqs]


def match_score(one_hot_seq: np.ndarray, motif: FMotif,
                background: Background) -> float:
    """Energy-normalized zero-lag correlation against rectified log-odds.

    For one-hot input the signal energy is the width; a PPM equal to the
    background has zero rectified energy and scores 0 by convention.
    """
    d = np.asarray(one_hot_seq, dtype=np.float64)
    if d.shape != (motif.width, 4):
        raise ValueError(f"one-hot shape {d.shape} vs motif width {motif.width}")
    rect = motif.rect_log_odds(background)
    e_ppm = float((rect ** 2).sum())
    if e_ppm == 0.0:
        return 0.0
    e_ldf = float((d ** 2).sum())
    return float((d * rect).sum() / np.sqrt(e_ldf * e_ppm))


def score_matrix(seqs: np.ndarray, motifs: list[FMotif],
                 background: Background) -> np.ndarray:
    """Match scores of digit sequences [N, width] against every motif."""
    d = one_hot(seqs).reshape(len(seqs), -1)
    rects = np.stack([m.rect_log_odds(background).reshape(-1) for m in motifs])
    e_ppm = (rects ** 2).sum(axis=1)
    width = seqs.shape[1]
    denom = np.sqrt(width * e_ppm)
    scores = d @ rects.T
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(denom > 0, scores / denom, 0.0)
    return scores


def assign_motif(one_hot_seq: np.ndarray, motifs: list[FMotif],
                 background: Background) -> int:
    """Best-scoring motif id; ties (and all-zero scores) go to the lowest id."""
    if not motifs:
        raise ValueError("empty motif list")
    scores = [match_score(one_hot_seq, m, background) for m in motifs]
    return int(np.argmax(scores))


def assign_batch(seqs: np.ndarray, motifs: list[FMotif],
                 background: Background) -> np.ndarray:
    if not motifs:
        raise ValueError("empty motif list")
    return np.argmax(score_matrix(seqs, motifs, background), axis=1)


# --------------------------------------------------------------- persistence

def motifs_to_json(motifs: list[FMotif], background: Background) -> str:
    doc = {
        "background": background.probs.tolist(),
        "motifs": [{
            "id": m.id, "level": m.level, "sites": m.sites,
            "converged": m.converged,
            "ppm": m.ppm.tolist(),
            "consensus": digits_to_letters(np.argmax(m.ppm, axis=1)),
        } for m in motifs],
    }
    return json.dumps(doc, indent=1)


def motifs_from_json(text: str) -> tuple[list[FMotif], Background]:
    doc = json.loads(text)
    background = Background(np.array(doc["background"]))
    motifs = [FMotif(ppm=np.array(m["ppm"]), sites=m["sites"], level=m["level"],
                     id=m["id"], converged=m.get("converged", True))
              for m in doc["motifs"]]
    return motifs, background
