"""SGD training loop with momentum, milestone learning rates and L2 decay.

Weight decay applies to conv/FC kernels only, never to biases or batch
norm parameters.  The loop is single threaded and fully deterministic
given the fold seed of its data feed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .model import Model


@dataclass
class TrainSchedule:
    epochs: int = 60
    batch_size: int = 128
    momentum: float = 0.9
    weight_decay: float = 0.001
    # epoch -> learning rate, applied from that epoch on
    lr_milestones: dict[int, float] = field(
        default_factory=lambda: {0: 0.02, 15: 0.01, 30: 0.005, 40: 0.002, 50: 0.001})
    fold_seed: int = 1

    def lr_at(self, epoch: int) -> float:
        rate = None
        for start in sorted(self.lr_milestones):
            if epoch >= start:
                rate = self.lr_milestones[start]
        if rate is None:
            raise ValueError(f"no learning rate covers epoch {epoch}")
        return rate

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "momentum": self.momentum, "weight_decay": self.weight_decay,
                "lr_milestones": {str(k): v for k, v in self.lr_milestones.items()},
                "fold_seed": self.fold_seed}

    @staticmethod
    def from_dict(d: dict) -> "TrainSchedule":
        return TrainSchedule(
            epochs=d["epochs"], batch_size=d["batch_size"],
            momentum=d["momentum"], weight_decay=d["weight_decay"],
            lr_milestones={int(k): v for k, v in d["lr_milestones"].items()},
            fold_seed=d["fold_seed"])


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_error: float
    seconds: float


def sgd_step(model: Model, grads: dict, velocity: dict, lr: float,
             momentum: float, weight_decay: float) -> None:
    decayed = set(model.decayed_parameter_names())
    for name, p in model.params.items():
        g = grads[name]
        if name in decayed and weight_decay:
            g = g + weight_decay * p
        v = velocity[name]
        v *= momentum
        v += g
        p -= lr * v


def train(model: Model, feed, sched: TrainSchedule,
          val_images: np.ndarray | None = None,
          val_labels: np.ndarray | None = None,
          log_fn=None) -> list[EpochLog]:
    """Train in place; returns the per-epoch log.

    `feed` is a MinibatchFeed (see data.py) owning all randomness.
    """
    velocity = {n: np.zeros_like(p) for n, p in model.params.items()}
    logs: list[EpochLog] = []
    for epoch in range(sched.epochs):
        lr = sched.lr_at(epoch)
        t0 = time.monotonic()
        losses = []
        for xb, yb in feed.epoch():
            logits, _, cache = model.forward(xb, mode="train")
            loss, dlogits = ops.softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"training loss became non-finite at epoch {epoch}")
            grads = model.backward(dlogits.astype(model.dtype), cache)
            sgd_step(model, grads, velocity, lr, sched.momentum, sched.weight_decay)
            losses.append(loss)
        val_error = float("nan")
        if val_images is not None:
            _, val_error, _ = evaluate(model, val_images, val_labels)
        entry = EpochLog(epoch, lr, float(np.mean(losses)), val_error,
                         time.monotonic() - t0)
        logs.append(entry)
        if log_fn:
            log_fn(entry)
    return logs


def evaluate(model: Model, images: np.ndarray, labels: np.ndarray):
    """Returns (accuracy, error percent, predicted labels) in infer mode."""
    preds = model.predict(images)
    acc = float(np.mean(preds == labels))
    return acc, 100.0 * (1.0 - acc), preds
