"""Command-line pipeline: train -> collect-ldf -> discover-motifs ->
collect-observations -> explain -> metrics, plus rendering and synthetic
data generation.

Each phase reads the artifacts of the previous one from the workspace
and fails with an actionable error (machine-readable JSON on stderr)
when a prerequisite is missing.  A lock file guards the workspace
against concurrent invocations; artifacts embed the config hash and are
byte-identical across re-runs with unchanged inputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import data as data_mod
from . import digits, ldf, metrics, render
from .config import RunConfig, config_hash, load_config
from .explainer import (collect_class_observations, collect_observations,
                        compute_representation, fit_probabilities, store_load,
                        store_save, surrogate_predict, tables_from_json,
                        tables_to_json)
from .model import Model, build
from .motif import (Background, discover_motifs, estimate_background,
                    motifs_from_json, motifs_to_json)

class PhaseError(RuntimeError):
    def __init__(self, message: str, run_phase: str | None = None,
                 missing: str | None = None):
        super().__init__(message)
        self.run_phase = run_phase
        self.missing = missing

    def to_json(self) -> str:
        return json.dumps({"error": str(self), "run_phase": self.run_phase,
                           "missing": self.missing})


@contextmanager
def workspace_lock(workspace: str):
    os.makedirs(workspace, exist_ok=True)
    lock = os.path.join(workspace, ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PhaseError(f"workspace {workspace} is locked by another "
                         f"invocation (remove {lock} if stale)")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        os.remove(lock)


def _need(path: str, phase: str) -> str:
    if not os.path.exists(path):
        raise PhaseError(f"missing artifact {path}; run the '{phase}' "
                         f"phase first", run_phase=phase, missing=path)
    return path


def _dir(cfg: RunConfig, name: str) -> str:
    d = os.path.join(cfg.workspace, name)
    os.makedirs(d, exist_ok=True)
    return d


def _ckpt(cfg: RunConfig, fold: int) -> str:
    return os.path.join(_dir(cfg, "checkpoints"), f"fold{fold}.ckpt")


def _load_datasets(cfg: RunConfig):
    paths = {
        "ti": os.path.join(cfg.data_dir, "train-images-idx3-ubyte"),
        "tl": os.path.join(cfg.data_dir, "train-labels-idx1-ubyte"),
        "vi": os.path.join(cfg.data_dir, "t10k-images-idx3-ubyte"),
        "vl": os.path.join(cfg.data_dir, "t10k-labels-idx1-ubyte"),
    }
    for p in paths.values():
        if not os.path.exists(p):
            raise PhaseError(f"dataset file {p} not found; point data_dir at "
                             "IDX files or generate some with 'synth-data'",
                             run_phase="synth-data", missing=p)
    train = data_mod.load_idx(paths["ti"], paths["tl"], cfg.dataset,
                              cfg.num_classes)
    val = data_mod.load_idx(paths["vi"], paths["vl"], cfg.dataset,
                            cfg.num_classes)
    return train, val


def _standardized(cfg: RunConfig):
    train, val = _load_datasets(cfg)
    xtr, mu, sigma = data_mod.standardize(train.images)
    xva, _, _ = data_mod.standardize(val.images, mu, sigma)
    return xtr, train.labels, xva, val.labels, mu, sigma


def _load_model(cfg: RunConfig, fold: int) -> Model:
    return Model.load(_need(_ckpt(cfg, fold), "train"))


def _write_if_changed(path: str, payload: bytes) -> None:
    """Keep artifacts byte-stable: skip the write when nothing changed."""
    if os.path.exists(path):
        with open(path, "rb") as f:
            if f.read() == payload:
                return
    with open(path, "wb") as f:
        f.write(payload)


# -------------------------------------------------------------------- phases

def cmd_synth_data(args) -> int:
    paths = digits.write_surrogate(args.out, n_train=args.train_count,
                                   n_val=args.val_count, seed=args.seed)
    print(json.dumps(paths, indent=1))
    return 0


def cmd_train(cfg: RunConfig, fold: int) -> int:
    from .data import FeedConfig, MinibatchFeed
    from .train import EpochLog, train

    chash = config_hash(cfg)  # before the fold seed is patched in below
    xtr, ytr, xva, yva, mu, sigma = _standardized(cfg)
    seed = cfg.fold_seeds[fold]
    model = build(cfg.architecture(), fold_seed=seed)
    feed_cfg = FeedConfig(pad=cfg.pad, crop=cfg.crop, hflip=cfg.hflip,
                          batch_size=cfg.schedule.batch_size, fold_seed=seed)
    feed = MinibatchFeed(xtr, ytr, feed_cfg)
    sched = cfg.schedule
    sched.fold_seed = seed

    def log(e: EpochLog):
        print(f"{model.arch.id} fold {fold} epoch {e.epoch} "
              f"loss {e.train_loss:.3f} val-err {e.val_error:.2f}% "
              f"{e.seconds:.0f}s", flush=True)

    logs = train(model, feed, sched, xva, yva, log_fn=log)
    model.save(_ckpt(cfg, fold))
    meta = {"config_hash": chash, "fold": fold,
            "mu": np.asarray(mu).tolist(), "sigma": np.asarray(sigma).tolist(),
            "val_error": logs[-1].val_error,
            "epochs": [{"epoch": e.epoch, "lr": e.lr, "loss": e.train_loss,
                        "val_error": e.val_error} for e in logs]}
    _write_if_changed(_ckpt(cfg, fold) + ".meta.json",
                      (json.dumps(meta, indent=1, sort_keys=True) + "\n").encode())
    return 0


def cmd_collect_ldf(cfg: RunConfig, fold: int, level: int | None) -> int:
    model = _load_model(cfg, fold)
    _, _, xva, _, _, _ = _standardized(cfg)
    levels = [level] if level else range(1, model.arch.levels + 1)
    out_dir = _dir(cfg, "vocab")
    for lv in levels:
        vocab = ldf.collect_vocabulary(model, xva, lv, cfg.c_ldf)
        text = f"; config {config_hash(cfg)}\n" + ldf.export_fasta(vocab)
        _write_if_changed(os.path.join(out_dir, f"fold{fold}-level{lv}.fasta"),
                          text.encode())
        print(f"level {lv}: {len(vocab)} unique sequences, "
              f"{vocab.total} occurrences", flush=True)
    return 0


def cmd_discover_motifs(cfg: RunConfig, fold: int, level: int | None) -> int:
    model = _load_model(cfg, fold)
    out_dir = _dir(cfg, "motifs")
    levels = [level] if level else range(1, model.arch.levels + 1)
    for lv in levels:
        fasta = _need(os.path.join(cfg.workspace, "vocab",
                                   f"fold{fold}-level{lv}.fasta"), "collect-ldf")
        with open(fasta) as f:
            seqs, counts = ldf.import_fasta(f.read())
        motifs = discover_motifs(seqs, counts, cfg.discovery, level=lv)
        background = estimate_background(seqs, counts)
        doc = json.loads(motifs_to_json(motifs, background))
        doc["config_hash"] = config_hash(cfg)
        _write_if_changed(os.path.join(out_dir, f"fold{fold}-level{lv}.json"),
                          (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode())
        print(f"level {lv}: {len(motifs)} motifs", flush=True)
    return 0


def _load_motif_sets(cfg: RunConfig, fold: int, n_levels: int):
    sets = {}
    for lv in range(1, n_levels + 1):
        path = _need(os.path.join(cfg.workspace, "motifs",
                                  f"fold{fold}-level{lv}.json"),
                     "discover-motifs")
        with open(path) as f:
            motifs, background = motifs_from_json(f.read())
        if motifs:
            sets[lv] = (motifs, background)
    return sets


def cmd_collect_observations(cfg: RunConfig, fold: int) -> int:
    model = _load_model(cfg, fold)
    _, _, xva, _, _, _ = _standardized(cfg)
    sets = _load_motif_sets(cfg, fold, model.arch.levels)
    rep = compute_representation(model, xva, sets, cfg.c_ldf)
    grids = model.level_grids(cfg.crop)
    out_dir = _dir(cfg, "observations")
    chash = config_hash(cfg)
    for lv in sorted(sets):
        n_m = len(sets[lv][0])
        cls = collect_class_observations(rep, lv, cfg.num_classes, n_m)
        store_save(cls, os.path.join(out_dir, f"fold{fold}-class-level{lv}.obs"),
                   chash)
        if lv - 1 in sets:
            eff = collect_observations(rep, grids, lv, n_m, len(sets[lv - 1][0]))
            store_save(eff, os.path.join(out_dir,
                                         f"fold{fold}-effects-level{lv}.obs"),
                       chash)
        print(f"level {lv}: class events {cls.total}", flush=True)
    np.save(os.path.join(out_dir, f"fold{fold}-predictions.npy"),
            rep.predictions)
    return 0


def cmd_explain(cfg: RunConfig, fold: int) -> int:
    obs_dir = os.path.join(cfg.workspace, "observations")
    _need(obs_dir, "collect-observations")
    class_tables, effect_tables = [], []
    for name in sorted(os.listdir(obs_dir)):
        if not name.startswith(f"fold{fold}-") or not name.endswith(".obs"):
            continue
        store = store_load(os.path.join(obs_dir, name))
        table = fit_probabilities(store, cfg.alpha)
        if "-class-" in name:
            class_tables.append((store.level, table))
        else:
            effect_tables.append((store.level, table))
    if not class_tables:
        raise PhaseError("no observation stores for this fold; run "
                         "'collect-observations' first",
                         run_phase="collect-observations", missing=obs_dir)
    out_dir = _dir(cfg, "tables")
    for kind, tables in (("class", class_tables), ("effects", effect_tables)):
        doc = json.loads(tables_to_json([t for _, t in tables]))
        doc["config_hash"] = config_hash(cfg)
        _write_if_changed(os.path.join(out_dir, f"fold{fold}-{kind}.json"),
                          (json.dumps(doc, sort_keys=True) + "\n").encode())
    print(f"fitted {len(class_tables)} class tables, "
          f"{len(effect_tables)} effect tables", flush=True)
    return 0


def cmd_metrics(cfg: RunConfig, fold: int) -> int:
    obs_dir = os.path.join(cfg.workspace, "observations")
    tab_dir = os.path.join(cfg.workspace, "tables")
    preds = np.load(_need(os.path.join(obs_dir, f"fold{fold}-predictions.npy"),
                          "collect-observations"))
    with open(_need(os.path.join(tab_dir, f"fold{fold}-class.json"),
                    "explain")) as f:
        class_tables = {t.level: t for t in tables_from_json(f.read())}
    with open(_need(os.path.join(tab_dir, f"fold{fold}-effects.json"),
                    "explain")) as f:
        effect_tables = {t.level: t for t in tables_from_json(f.read())}

    fto_by_level, fce_by_level, motif_counts = {}, {}, {}
    for lv, table in sorted(class_tables.items()):
        store = store_load(os.path.join(obs_dir,
                                        f"fold{fold}-class-level{lv}.obs"))
        motif_counts[lv] = store.n_causes
        # expand deduplicated events back to per-sample agreement
        sur = surrogate_predict(store.presence_bool(), table)
        hits = (sur == store.effects) * store.counts
        fto_by_level[lv] = float(hits.sum() / store.counts.sum())
    for lv, table in sorted(effect_tables.items()):
        store = store_load(os.path.join(obs_dir,
                                        f"fold{fold}-effects-level{lv}.obs"))
        fce_by_level[lv] = metrics.fce(store, table)

    report = metrics.fidelity_report(fto_by_level, fce_by_level, motif_counts)
    report["config_hash"] = config_hash(cfg)
    report["n_samples"] = int(len(preds))
    out_dir = _dir(cfg, "reports")
    _write_if_changed(os.path.join(out_dir, f"fold{fold}-metrics.json"),
                      (metrics.report_to_json(report) + "\n").encode())
    text = (f"# config {config_hash(cfg)}\n" + metrics.format_report(report))
    _write_if_changed(os.path.join(out_dir, f"fold{fold}-metrics.txt"),
                      text.encode())
    print(metrics.format_report(report), flush=True)
    return 0


def cmd_render(cfg: RunConfig, fold: int, level: int, motif_id: int | None,
               out: str | None, n_samples: int = 8) -> int:
    model = _load_model(cfg, fold)
    _, _, xva, _, _, _ = _standardized(cfg)
    xva = xva[:n_samples]
    sets = _load_motif_sets(cfg, fold, model.arch.levels)
    if level not in sets:
        raise PhaseError(f"no motifs for level {level}; run 'discover-motifs'",
                         run_phase="discover-motifs")
    motifs, background = sets[level]
    rep = compute_representation(model, xva, {level: sets[level]}, cfg.c_ldf)
    out_dir = out or _dir(cfg, "renders")
    os.makedirs(out_dir, exist_ok=True)
    chash = f"config {config_hash(cfg)}"
    _, levels, _ = model.forward(xva.astype(model.dtype), capture_levels=True)
    act = levels[level - 1]
    n, h, w, c = act.shape
    seq = ldf.encode_quaternary(
        ldf.extract_ldf(act, cfg.c_ldf).reshape(n, h, w, cfg.c_ldf), c)
    for i in range(len(xva)):
        m = render.mosaic(rep.assignments[level][i])
        render.write_ppm(os.path.join(
            out_dir, f"fold{fold}-level{level}-sample{i}-mosaic.ppm"), m, chash)
        if motif_id is not None:
            scores = render.motif_match_scores(seq[i], motifs, background,
                                               motif_id)
            overlay = render.heatmap(xva[i], scores)
            render.write_ppm(os.path.join(
                out_dir,
                f"fold{fold}-level{level}-sample{i}-motif{motif_id}.ppm"),
                overlay, chash)
    print(f"wrote renders for {len(xva)} samples to {out_dir}", flush=True)
    return 0


# ---------------------------------------------------------------- entry point

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="explainet",
                                description="train, discover motifs, and "
                                            "explain a residual network")
    sub = p.add_subparsers(dest="command", required=True)

    sd = sub.add_parser("synth-data", help="render a surrogate digit dataset")
    sd.add_argument("--out", required=True)
    sd.add_argument("--train-count", type=int, default=60000)
    sd.add_argument("--val-count", type=int, default=10000)
    sd.add_argument("--seed", type=int, default=20240901)

    for name in ("train", "collect-ldf", "discover-motifs",
                 "collect-observations", "explain", "metrics", "render"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--fold", type=int, default=0)
        if name in ("collect-ldf", "discover-motifs", "render"):
            sp.add_argument("--level", type=int, default=None)
        if name == "render":
            sp.add_argument("--motif", type=int, default=None)
            sp.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "synth-data":
            return cmd_synth_data(args)
        cfg = load_config(args.config)
        if not (0 <= args.fold < len(cfg.fold_seeds)):
            raise PhaseError(f"fold {args.fold} outside configured folds "
                             f"0..{len(cfg.fold_seeds) - 1}")
        with workspace_lock(cfg.workspace):
            if args.command == "train":
                return cmd_train(cfg, args.fold)
            if args.command == "collect-ldf":
                return cmd_collect_ldf(cfg, args.fold, args.level)
            if args.command == "discover-motifs":
                return cmd_discover_motifs(cfg, args.fold, args.level)
            if args.command == "collect-observations":
                return cmd_collect_observations(cfg, args.fold)
            if args.command == "explain":
                return cmd_explain(cfg, args.fold)
            if args.command == "metrics":
                return cmd_metrics(cfg, args.fold)
            if args.command == "render":
                if args.level is None:
                    raise PhaseError("render requires --level")
                return cmd_render(cfg, args.fold, args.level, args.motif,
                                  args.out)
        raise PhaseError(f"unknown command {args.command}")
    except PhaseError as e:
        print(e.to_json(), file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
