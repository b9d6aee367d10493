import pytest

from explainet.config import (RunConfig, config_hash, load_config,
                              save_config)
from explainet.motif import DiscoveryConfig
from explainet.train import TrainSchedule


def _cfg(**kw):
    base = dict(workspace="/tmp/w", data_dir="/tmp/d")
    base.update(kw)
    return RunConfig(**base)


def test_roundtrip_through_json(tmp_path):
    cfg = _cfg(arch_name="R8", depth=22, use_lil=False,
               fold_seeds=[3, 5, 7],
               schedule=TrainSchedule(epochs=5, lr_milestones={0: 0.1, 3: 0.01}),
               discovery=DiscoveryConfig(k_motifs=7))
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)


def test_hash_sensitive_to_any_field():
    a = _cfg()
    b = _cfg(c_ldf=3)
    c = _cfg(schedule=TrainSchedule(epochs=59))
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 12


def test_architecture_construction():
    cfg = _cfg(arch_name="R16", depth=18, use_lil=True)
    arch = cfg.architecture()
    assert arch.id == "R-ExplaiNet18-16"
    assert cfg.architecture() == arch  # deterministic


def test_defaults_match_training_recipe():
    cfg = _cfg()
    assert cfg.schedule.epochs == 60
    assert cfg.schedule.lr_milestones[0] == 0.02
    assert cfg.discovery.k_motifs == 96
    assert cfg.discovery.n_sites == 200
    assert cfg.alpha == 1.0
    assert cfg.c_ldf == 4
