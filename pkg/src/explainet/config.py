"""Experiment configuration: one JSON document fully determines a run.

The canonical config hash (first 12 hex digits of the SHA-256 of the
sorted-key JSON) is embedded in every artifact a phase writes, so a
workspace can always be audited against the config that produced it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .model import Architecture, architecture_from_id
from .motif import DiscoveryConfig
from .train import TrainSchedule


@dataclass
class RunConfig:
    workspace: str
    data_dir: str
    dataset: str = "MNIST"
    arch_name: str = "R16"
    depth: int = 18
    use_lil: bool = True
    clip: bool = False
    num_classes: int = 10
    c_ldf: int = 4
    alpha: float = 1.0
    pad: int = 3
    crop: int = 28
    hflip: bool = False
    fold_seeds: list[int] = field(default_factory=lambda: [1])
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)

    def architecture(self) -> Architecture:
        return architecture_from_id(self.arch_name, self.depth,
                                    use_lil=self.use_lil, clip=self.clip,
                                    num_classes=self.num_classes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = self.schedule.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        d = dict(d)
        d["schedule"] = TrainSchedule.from_dict(d["schedule"])
        d["discovery"] = DiscoveryConfig(**d.get("discovery", {}))
        return RunConfig(**d)


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=1, sort_keys=True)
        f.write("\n")


def load_config(path) -> RunConfig:
    with open(path) as f:
        return RunConfig.from_dict(json.load(f))
