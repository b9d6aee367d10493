import numpy as np
import pytest

from explainet.data import FeedConfig, MinibatchFeed
from explainet.model import Architecture, build
from explainet.train import TrainSchedule, evaluate, sgd_step, train


def _tiny():
    arch = Architecture(depth=18, stem_features=2, block_features=(2, 2, 4, 4),
                        use_lil=True)
    return build(arch, fold_seed=2)


def _toy_data(n=32, seed=0):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, 12, 12, 1)).astype(np.float32)
    y = gen.integers(0, 10, size=n)
    return x, y


def test_lr_milestones():
    s = TrainSchedule()
    assert s.lr_at(0) == 0.02
    assert s.lr_at(14) == 0.02
    assert s.lr_at(15) == 0.01
    assert s.lr_at(30) == 0.005
    assert s.lr_at(45) == 0.002
    assert s.lr_at(59) == 0.001
    with pytest.raises(ValueError):
        TrainSchedule(lr_milestones={5: 0.1}).lr_at(0)


def test_schedule_dict_roundtrip():
    s = TrainSchedule(epochs=10, weight_decay=0.002, fold_seed=42)
    back = TrainSchedule.from_dict(s.to_dict())
    assert back == s


def test_sgd_momentum_and_decay_selectivity():
    model = _tiny()
    grads = {n: np.zeros_like(p) for n, p in model.params.items()}
    before = {n: p.copy() for n, p in model.params.items()}
    velocity = {n: np.zeros_like(p) for n, p in model.params.items()}
    sgd_step(model, grads, velocity, lr=0.1, momentum=0.9, weight_decay=0.01)
    for n, p in model.params.items():
        if n.endswith(".w"):
            # pure decay: p <- p - lr * wd * p
            assert np.allclose(p, before[n] * (1 - 0.1 * 0.01))
        else:
            assert (p == before[n]).all()


def test_sgd_momentum_accumulates():
    model = _tiny()
    name = "head.b"
    g = {n: np.zeros_like(p) for n, p in model.params.items()}
    g[name] = np.ones_like(model.params[name])
    v = {n: np.zeros_like(p) for n, p in model.params.items()}
    sgd_step(model, g, v, lr=1.0, momentum=0.5, weight_decay=0.0)
    sgd_step(model, g, v, lr=1.0, momentum=0.5, weight_decay=0.0)
    # steps of 1 then 1.5
    assert np.allclose(model.params[name], -2.5)


def test_training_reduces_loss_on_toy_problem():
    model = _tiny()
    x, y = _toy_data(64)
    feed = MinibatchFeed(x, y, FeedConfig(pad=1, crop=12, batch_size=16,
                                          fold_seed=3))
    sched = TrainSchedule(epochs=8, batch_size=16, weight_decay=0.0,
                          lr_milestones={0: 0.05}, fold_seed=3)
    logs = train(model, feed, sched)
    assert logs[-1].train_loss < logs[0].train_loss


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        model = _tiny()
        x, y = _toy_data(32)
        feed = MinibatchFeed(x, y, FeedConfig(pad=1, crop=12, batch_size=16,
                                              fold_seed=4))
        sched = TrainSchedule(epochs=2, batch_size=16,
                              lr_milestones={0: 0.02}, fold_seed=4)
        train(model, feed, sched)
        runs.append({n: p.copy() for n, p in model.params.items()})
    for n in runs[0]:
        assert (runs[0][n] == runs[1][n]).all(), n


def test_evaluate_error_percent():
    model = _tiny()
    x, y = _toy_data(16)
    acc, err, preds = evaluate(model, x, y)
    assert err == pytest.approx(100.0 * (1 - acc))
    assert len(preds) == 16


def test_train_aborts_on_divergence():
    model = _tiny()
    x, y = _toy_data(16)
    feed = MinibatchFeed(x, y, FeedConfig(pad=1, crop=12, batch_size=16,
                                          fold_seed=5))
    sched = TrainSchedule(epochs=3, batch_size=16,
                          lr_milestones={0: 1e4}, fold_seed=5)
    with pytest.raises(FloatingPointError), \
            np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        train(model, feed, sched)
