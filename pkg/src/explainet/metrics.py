"""Fidelity and efficiency metrics over the explainer graph.

fto: agreement rate between surrogate and network predictions.
fce: per-effect rate at which the observed causes reproduce the
     observed effect, with the three reported aggregates.
rme: within-group efficiency index, normalized so the worst model
     scores 0 and the best scores 1/sqrt(size in MP).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .explainer import NaiveBayesTable, ObservationStore, surrogate_predict


def fto(predicted: np.ndarray, explained: np.ndarray) -> float:
    """Fraction of samples where the surrogate matches the network."""
    predicted = np.asarray(predicted)
    explained = np.asarray(explained)
    if predicted.shape != explained.shape:
        raise ValueError("prediction lists differ in length")
    if predicted.size == 0:
        raise ValueError("empty prediction lists")
    return float(np.mean(predicted == explained))


@dataclass
class FceResult:
    per_effect: dict[int, float]   # effect id -> accuracy over its events
    all_mean: float
    all_ci95: float
    top20_mean: float
    best: float

    def to_dict(self) -> dict:
        return {"per_effect": {str(k): v for k, v in self.per_effect.items()},
                "all_mean": self.all_mean, "all_ci95": self.all_ci95,
                "top20_mean": self.top20_mean, "best": self.best}


def fce(store: ObservationStore, table: NaiveBayesTable) -> FceResult:
    """Per-effect explanation accuracy and its three aggregates.

    Every observed event counts with its multiplicity; an event is
    explained when the most probable effect under its cause presences is
    the effect that was observed.
    """
    if store.total == 0:
        raise ValueError("empty observation store")
    hits = surrogate_predict(store.presence_bool(), table) == store.effects
    per_effect: dict[int, float] = {}
    for eff in np.unique(store.effects):
        mask = store.effects == eff
        w = store.counts[mask]
        per_effect[int(eff)] = float((hits[mask] * w).sum() / w.sum())
    vals = np.array(sorted(per_effect.values(), reverse=True))
    n_top = max(1, int(math.ceil(0.2 * len(vals))))
    ci = 1.96 * vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return FceResult(per_effect, float(vals.mean()), float(ci),
                     float(vals[:n_top].mean()), float(vals[0]))


@dataclass
class GroupEntry:
    model_id: str
    metric: float        # accuracy or error mean for the group's task
    size_mp: float       # parameter count in millions

    def __post_init__(self):
        if self.size_mp <= 0:
            raise ValueError(f"{self.model_id}: size must be positive")


def rme(group: list[GroupEntry], higher_is_better: bool = False) -> dict[str, float]:
    """Relative model efficiency within a declared group.

    The metric is min-max normalized to nu in [0, 1] with the *best*
    model at 1 (for error metrics that is the lowest value), then scaled
    as nu * (2^nu - 1) / sqrt(size).
    """
    if len(group) < 2:
        raise ValueError("need at least two models in a group")
    mus = np.array([e.metric for e in group])
    lo, hi = mus.min(), mus.max()
    if lo == hi:
        raise ValueError("degenerate group: all metrics equal")
    nu = (mus - lo) / (hi - lo) if higher_is_better else (hi - mus) / (hi - lo)
    scores = nu * (2.0 ** nu - 1.0) / np.sqrt([e.size_mp for e in group])
    return {e.model_id: float(s) for e, s in zip(group, scores)}


# ------------------------------------------------------------------ reporting

def fidelity_report(fto_by_level: dict[int, float],
                    fce_by_level: dict[int, FceResult],
                    motif_counts: dict[int, int]) -> dict:
    """Per-level fidelity summary shaped like the published table."""
    levels = sorted(set(fto_by_level) | set(fce_by_level) | set(motif_counts))
    return {"levels": levels,
            "motif_counts": {str(lv): motif_counts.get(lv) for lv in levels},
            "fto_percent": {str(lv): 100.0 * fto_by_level[lv]
                            for lv in levels if lv in fto_by_level},
            "fce": {str(lv): fce_by_level[lv].to_dict()
                    for lv in levels if lv in fce_by_level}}


def format_report(report: dict) -> str:
    levels = report["levels"]
    header = "level        " + "".join(f"{lv:>9d}" for lv in levels)
    lines = [header, "-" * len(header)]

    def row(label, values, fmt="{:9.2f}"):
        cells = []
        for lv in levels:
            v = values.get(str(lv))
            cells.append(fmt.format(v) if v is not None else "        -")
        lines.append(f"{label:<13}" + "".join(cells))

    row("n motifs", report["motif_counts"], "{:9d}")
    row("FTO %", report["fto_percent"])
    fces = report["fce"]
    row("All effects", {k: 100 * v["all_mean"] for k, v in fces.items()})
    row("  +-95% CI", {k: 100 * v["all_ci95"] for k, v in fces.items()})
    row("Top 20%", {k: 100 * v["top20_mean"] for k, v in fces.items()})
    row("Best motif", {k: 100 * v["best"] for k, v in fces.items()})
    return "\n".join(lines) + "\n"


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=1)
