import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simplenet.archspec import parse_arch
from simplenet.data import AugmentConfig, Dataset
from simplenet.network import build
from simplenet.optim import LOG_COLUMNS, SGD, TrainConfig, decays, fit, lr_at, sgd_step, train_epoch
from simplenet.tensor import NonFiniteError, make_rng

TINY = "input 1x8x8\nclasses 4\nconv 6 k3\npool\nconv 8 k3\ngpool\nfc 4\n"


def tiny_data(n=48, seed=0):
    r = np.random.default_rng(seed)
    labels = np.arange(n) % 4
    images = r.random((n, 1, 8, 8)).astype(np.float32) * 0.3
    for i, lab in enumerate(labels):
        images[i, 0, (lab // 2) * 4:(lab // 2) * 4 + 4, (lab % 2) * 4:(lab % 2) * 4 + 4] += 0.7
    return Dataset(images, labels, "train", 4)


def one(value):
    return np.array([value], dtype=np.float64)


@pytest.mark.parametrize("wd, expected", [(0.0, 0.9), (0.1, 0.89)])
def test_sgd_single_step(wd, expected):
    w, v = one(1.0), one(0.0)
    sgd_step(w, one(1.0), v, 0.1, 0.0, wd)
    assert w[0] == pytest.approx(expected)


def test_sgd_momentum_recurrence():
    w, v = one(0.0), one(0.0)
    sgd_step(w, one(1.0), v, 0.1, 0.9)
    assert (v[0], w[0]) == pytest.approx((-0.1, -0.1))
    sgd_step(w, one(1.0), v, 0.1, 0.9)
    assert (v[0], w[0]) == pytest.approx((-0.19, -0.29))


@given(arrays(np.float32, 6, elements=st.floats(-10, 10, width=32)),
       arrays(np.float32, 6, elements=st.floats(-10, 10, width=32)),
       st.floats(1e-4, 1.0))
def test_plain_sgd_is_gradient_descent(w, g, lr):
    lr = np.float32(lr)
    expected = w - lr * g
    sgd_step(w, g, np.zeros_like(w), lr, np.float32(0.0), 0.0)
    np.testing.assert_array_equal(w, expected)


@pytest.mark.parametrize("momentum", [0.0, 0.9])
def test_weight_decay_shrinks_norm(momentum):
    w = np.random.default_rng(0).standard_normal(50)
    v = np.zeros_like(w)
    norms = [np.linalg.norm(w)]
    for _ in range(50):
        sgd_step(w, np.zeros_like(w), v, 0.1, momentum, 0.005)
        norms.append(np.linalg.norm(w))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_sgd_errors():
    with pytest.raises(ValueError):
        sgd_step(np.zeros(3), np.zeros(4), np.zeros(3), 0.1)
    with pytest.raises(NonFiniteError):
        sgd_step(np.zeros(3), np.array([0, np.inf, 0]), np.zeros(3), 0.1)


@pytest.mark.parametrize("epoch, lr", [(0, 0.1), (29, 0.1), (30, 0.01), (59, 0.01), (60, 0.001), (75, 0.001)])
def test_lr_at(epoch, lr):
    cfg = TrainConfig(lr0=0.1, schedule=[(30, 0.1), (60, 0.1)], epochs=90)
    assert lr_at(cfg, epoch) == pytest.approx(lr)


def test_default_schedule():
    cfg = TrainConfig(epochs=16)
    assert cfg.milestones() == [(8, 0.1), (12, 0.1)]
    assert lr_at(cfg, 15) == pytest.approx(0.001)


@pytest.mark.parametrize("kwargs", [dict(lr0=0.0), dict(momentum=1.0), dict(momentum=-0.1),
                                    dict(weight_decay=-1.0), dict(batch=0)])
def test_train_config_invariants(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_weight_decay_targets():
    assert decays("conv3.weight") and decays("fc.weight")
    assert not decays("bn3.gamma") and not decays("bn3.beta") and not decays("fc.bias")


def test_sgd_skips_decay_for_bn():
    params = {"bn1.gamma": np.ones(3, np.float32), "conv1.weight": np.ones(3, np.float32)}
    grads = {k: np.zeros(3, np.float32) for k in params}
    SGD(0.0, 0.5).step(params, grads, 0.1)
    assert np.all(params["bn1.gamma"] == 1) and np.all(params["conv1.weight"] < 1)


def _epoch_losses(seed, epochs=2, augment=None):
    ds = tiny_data()
    net = build(parse_arch(TINY), seed)
    cfg = TrainConfig(lr0=0.05, batch=16, epochs=epochs, seed=seed, augment=augment)
    return [(r["train_loss"], r["train_acc"]) for r in fit(net, ds, ds, cfg)], net.state_hash()


def test_training_deterministic():
    aug = AugmentConfig(2, 8, True)
    assert _epoch_losses(3, augment=aug) == _epoch_losses(3, augment=aug)
    assert _epoch_losses(3)[0] != _epoch_losses(4)[0]


def test_zero_lr_changes_only_running_stats():
    ds = tiny_data()
    net = build(parse_arch(TINY), 0)
    params = {k: v.copy() for k, v in net.params.items()}
    buffers = {k: v.copy() for k, v in net.buffers.items()}
    cfg = TrainConfig(batch=16)
    train_epoch(net, ds, cfg, make_rng(0), SGD(0.9, 0.005), lr=0.0)
    for k, v in net.params.items():
        np.testing.assert_array_equal(v, params[k])
    assert any(not np.array_equal(v, buffers[k]) for k, v in net.buffers.items())


def test_overfit_tiny_problem():
    ds = tiny_data()
    net = build(parse_arch(TINY), 1)
    cfg = TrainConfig(lr0=0.05, schedule=[], batch=48, epochs=1)
    opt, rng = SGD(0.9, 0.0), make_rng(0)
    for _ in range(300):
        loss, acc = train_epoch(net, ds, cfg, rng, opt, 0.05)
        if acc == 1.0:
            break
    assert acc == 1.0


def test_fit_writes_log(tmp_path):
    ds = tiny_data()
    path = tmp_path / "log.csv"
    rows = fit(build(parse_arch(TINY), 0), ds, ds, TrainConfig(lr0=0.05, batch=16, epochs=3), str(path))
    with open(path) as fh:
        reader = csv.DictReader(fh)
        assert tuple(reader.fieldnames) == LOG_COLUMNS
        logged = list(reader)
    assert [r["epoch"] for r in logged] == ["1", "2", "3"] and len(rows) == 3
    # default milestones for 3 epochs fall at epochs 1 and 2
    assert [float(r["lr"]) for r in logged] == pytest.approx([0.05, 0.005, 0.0005])
    assert all(0.0 <= float(r["test_acc"]) <= 1.0 for r in logged)


def test_non_finite_halts():
    ds = tiny_data()
    net = build(parse_arch(TINY), 0)
    net.params["fc.weight"][...] = np.inf
    with pytest.raises(NonFiniteError):
        train_epoch(net, ds, TrainConfig(batch=16), make_rng(0), SGD(), 0.1)
