"""Probabilistic explainer graph over per-level motif representations.

Every spatial position of every level gets the id of its best-matching
motif; an *effect* is the motif observed at a position, its *causes* are
the motifs present in the receptive-field neighborhood one level below.
Cause/effect co-occurrences feed per-level Naive Bayes tables over
presence events, and a final table links the top-level motif presences
to the network's own predicted class.  The fitted tables answer two
questions: which causes make an effect likely (explanation) and how
faithfully the motif representation reproduces the network's behavior
(surrogate prediction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ldf import encode_quaternary, extract_ldf
from .motif import Background, FMotif, assign_batch

SMOOTHING_ALPHA = 1.0


# ------------------------------------------------------------ receptive field

def map_receptive_field(grids: list[tuple[int, int]], level: int,
                        y: int, x: int) -> list[tuple[int, int]]:
    """Positions one level below that feed position (y, x) of `level`.

    Levels are 1-based.  At equal resolution this is the clipped 3x3
    neighborhood; across a stride-2 boundary it is the clipped 3x3
    neighborhood of the anchor (2y, 2x) in the finer grid.  Level 1 has
    no causes.
    """
    if level <= 1:
        return []
    h, w = grids[level - 1]
    hp, wp = grids[level - 2]
    if not (0 <= y < h and 0 <= x < w):
        raise ValueError(f"position ({y}, {x}) outside {h}x{w} grid")
    cy, cx = (y, x) if (hp, wp) == (h, w) else (2 * y, 2 * x)
    return [(i, j)
            for i in range(cy - 1, cy + 2) if 0 <= i < hp
            for j in range(cx - 1, cx + 2) if 0 <= j < wp]


# ------------------------------------------------------------- representation

@dataclass
class Representation:
    """Motif assignment of every spatial position, per sample and level."""
    assignments: dict[int, np.ndarray]  # level -> [N, H, W] motif ids
    predictions: np.ndarray             # [N] class predicted by the network

    def __len__(self):
        return len(self.predictions)


def compute_representation(model, images: np.ndarray,
                           motif_sets: dict[int, tuple[list[FMotif], Background]],
                           c_ldf: int, batch_size: int = 256) -> Representation:
    """Assign each position its argmax-scoring motif; capture predictions."""
    assignments: dict[int, list[np.ndarray]] = {lv: [] for lv in motif_sets}
    preds = []
    for i in range(0, len(images), batch_size):
        logits, levels, _ = model.forward(images[i:i + batch_size].astype(model.dtype),
                                          capture_levels=True)
        preds.append(np.argmax(logits, axis=1))
        for lv, (motifs, background) in motif_sets.items():
            act = levels[lv - 1]
            n, h, w, c = act.shape
            digits = encode_quaternary(extract_ldf(act, c_ldf).reshape(-1, c_ldf), c)
            ids = assign_batch(digits, motifs, background)
            assignments[lv].append(ids.reshape(n, h, w))
    return Representation(
        {lv: np.concatenate(parts) for lv, parts in assignments.items()},
        np.concatenate(preds))


# ----------------------------------------------------------- presence packing

def pack_presence(present: np.ndarray) -> np.ndarray:
    """Boolean [.., n] presence matrix -> [.., ceil(n/64)] uint64 words."""
    present = np.asarray(present, dtype=bool)
    n = present.shape[-1]
    n_words = (n + 63) // 64
    bits = np.zeros((*present.shape[:-1], n_words), dtype=np.uint64)
    idx = np.arange(n)
    np.bitwise_or.at(
        bits, (..., idx // 64),
        np.where(present, np.uint64(1) << (idx % 64).astype(np.uint64), np.uint64(0)))
    return bits


def unpack_presence(words: np.ndarray, n: int) -> np.ndarray:
    idx = np.arange(n)
    return (words[..., idx // 64] >> (idx % 64).astype(np.uint64)) & np.uint64(1) > 0


# --------------------------------------------------------------- observations

@dataclass
class ObservationStore:
    """Deduplicated (effect, cause-set) events with multiplicities.

    For motif stores the effects are the motifs of `level` and the
    causes the motifs one level below; for class stores the effects are
    the network's predicted classes and the causes the motifs present
    anywhere in `level`.
    """
    level: int
    n_effects: int
    n_causes: int
    effects: np.ndarray   # [M] int
    presence: np.ndarray  # [M, n_words] uint64 packed cause sets
    counts: np.ndarray    # [M] int multiplicities

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def presence_bool(self) -> np.ndarray:
        return unpack_presence(self.presence, self.n_causes)


def _dedup(effects: np.ndarray, words: np.ndarray,
           weights: np.ndarray | None = None):
    rows = np.concatenate([effects[:, None].astype(np.uint64), words], axis=1)
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    if weights is None:
        counts = np.bincount(inverse, minlength=len(uniq))
    else:
        counts = np.bincount(inverse, weights=weights, minlength=len(uniq))
    return uniq[:, 0].astype(np.int64), uniq[:, 1:], counts.astype(np.int64)


def collect_observations(rep: Representation, grids: list[tuple[int, int]],
                         level: int, n_effects: int, n_causes: int) -> ObservationStore:
    """Effect/cause-presence events for one level of the hierarchy."""
    if level <= 1:
        raise ValueError("level 1 has no causes to observe")
    eff_ids = rep.assignments[level]
    cause_ids = rep.assignments[level - 1]
    n, h, w = eff_ids.shape
    all_effects = []
    all_words = []
    for y in range(h):
        for x in range(w):
            present = np.zeros((n, n_causes), dtype=bool)
            for cy, cx in map_receptive_field(grids, level, y, x):
                present[np.arange(n), cause_ids[:, cy, cx]] = True
            all_effects.append(eff_ids[:, y, x])
            all_words.append(pack_presence(present))
    effects, words, counts = _dedup(np.concatenate(all_effects),
                                    np.concatenate(all_words))
    return ObservationStore(level, n_effects, n_causes, effects, words, counts)


def collect_class_observations(rep: Representation, top_level: int,
                               n_classes: int, n_causes: int) -> ObservationStore:
    """Network prediction vs. motifs present anywhere in the top level."""
    ids = rep.assignments[top_level]
    n = len(ids)
    present = np.zeros((n, n_causes), dtype=bool)
    flat = ids.reshape(n, -1)
    present[np.repeat(np.arange(n), flat.shape[1]), flat.reshape(-1)] = True
    effects, words, counts = _dedup(rep.predictions, pack_presence(present))
    return ObservationStore(top_level, n_classes, n_causes, effects, words,
                            counts)


# ----------------------------------------------------------------- Bayes fit

@dataclass
class NaiveBayesTable:
    level: int
    priors: np.ndarray        # [n_effects]
    conditionals: np.ndarray  # [n_effects, n_causes] P(cause present | effect)
    support: np.ndarray       # [n_effects] raw effect counts


def fit_probabilities(store: ObservationStore,
                      alpha: float = SMOOTHING_ALPHA) -> NaiveBayesTable:
    """Add-alpha estimates of effect priors and presence conditionals."""
    present = store.presence_bool().astype(np.float64)
    n_c = np.bincount(store.effects, weights=store.counts,
                      minlength=store.n_effects)
    n_ic = np.zeros((store.n_effects, store.n_causes))
    np.add.at(n_ic, store.effects, present * store.counts[:, None])
    priors = (n_c + alpha) / (store.total + alpha * store.n_effects)
    conditionals = (n_ic + alpha) / (n_c[:, None] + alpha * store.n_causes)
    return NaiveBayesTable(store.level, priors, conditionals,
                           n_c.astype(np.int64))


def nb_log_scores(present: np.ndarray, table: NaiveBayesTable) -> np.ndarray:
    """Log prior plus log conditionals of the *present* causes only."""
    present = np.atleast_2d(np.asarray(present, dtype=np.float64))
    return np.log(table.priors) + present @ np.log(table.conditionals).T


def surrogate_predict(present: np.ndarray, table: NaiveBayesTable) -> np.ndarray:
    """Most probable effect per presence row; ties go to the lowest id."""
    return np.argmax(nb_log_scores(present, table), axis=1)


def explain_effect(present: np.ndarray, table: NaiveBayesTable) -> int:
    """Most probable effect for one cause-presence vector (lowest-id ties)."""
    return int(nb_log_scores(present, table)[0].argmax())


def effect_posterior(present: np.ndarray, table: NaiveBayesTable) -> np.ndarray:
    """Posterior distribution over effects for one presence vector."""
    scores = nb_log_scores(present, table)[0]
    scores -= scores.max()
    p = np.exp(scores)
    return p / p.sum()


def cause_relevance(effect: int, table: NaiveBayesTable) -> np.ndarray:
    """Per-cause log-odds of the effect vs. the prior-weighted rest.

    Positive entries are causes whose presence argues for the effect.
    """
    logp = np.log(table.conditionals)
    rest = np.log((table.priors[:, None] * table.conditionals).sum(axis=0))
    return logp[effect] - rest


# ---------------------------------------------------------------- persistence

STORE_MAGIC = b"XOBS1\n"


def store_save(store: ObservationStore, path, config_hash: str = "") -> None:
    """Deterministic container: JSON header + raw little-endian buffers."""
    arrays = [("effects", store.effects.astype("<i8")),
              ("presence", store.presence.astype("<u8")),
              ("counts", store.counts.astype("<i8"))]
    header = json.dumps({
        "level": store.level, "n_effects": store.n_effects,
        "n_causes": store.n_causes, "config_hash": config_hash,
        "shapes": {n: list(a.shape) for n, a in arrays},
    }, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(STORE_MAGIC)
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        for _, a in arrays:
            f.write(a.tobytes())


def store_load(path) -> ObservationStore:
    with open(path, "rb") as f:
        if f.read(len(STORE_MAGIC)) != STORE_MAGIC:
            raise ValueError(f"{path}: not an observation store")
        hlen = int.from_bytes(f.read(4), "little")
        header = json.loads(f.read(hlen))
        out = {}
        for name, dt in (("effects", "<i8"), ("presence", "<u8"),
                         ("counts", "<i8")):
            shape = header["shapes"][name]
            n = int(np.prod(shape))
            out[name] = np.frombuffer(f.read(n * 8), dtype=dt).reshape(shape)
    return ObservationStore(header["level"], header["n_effects"],
                            header["n_causes"], out["effects"],
                            out["presence"], out["counts"])


def tables_to_json(tables: list[NaiveBayesTable]) -> str:
    return json.dumps({"tables": [{
        "level": t.level,
        "priors": t.priors.tolist(),
        "conditionals": t.conditionals.tolist(),
        "support": t.support.tolist(),
    } for t in tables]})


def tables_from_json(text: str) -> list[NaiveBayesTable]:
    doc = json.loads(text)
    return [NaiveBayesTable(d["level"], np.array(d["priors"]),
                            np.array(d["conditionals"]),
                            np.array(d["support"], dtype=np.int64))
            for d in doc["tables"]]
