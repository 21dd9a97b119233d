"""SGD with momentum and weight decay, step schedules and the epoch loop."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import AugmentConfig, Dataset, augment_batch, inputs
from .layers import softmax_xent
from .network import Network, evaluate
from .tensor import NonFiniteError, make_rng

LOG_COLUMNS = ("epoch", "lr", "train_loss", "train_acc", "test_acc", "seconds")


@dataclass
class TrainConfig:
    lr0: float = 0.1
    # (epoch, multiplier) pairs; None means x0.1 at 50% and 75% of the epochs
    schedule: list | None = None
    momentum: float = 0.9
    weight_decay: float = 0.005
    batch: int = 128
    epochs: int = 15
    seed: int = 0
    augment: AugmentConfig | None = None

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")

    def milestones(self) -> list:
        if self.schedule is not None:
            return list(self.schedule)
        return [(max(1, self.epochs // 2), 0.1), (max(1, (3 * self.epochs) // 4), 0.1)]


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """``lr0`` times every multiplier whose epoch has been reached."""
    lr = cfg.lr0
    for start, mult in cfg.milestones():
        if epoch >= start:
            lr *= mult
    return lr


def sgd_step(param, grad, velocity, lr, momentum=0.0, wd=0.0):
    """In-place update ``v = m*v - lr*(g + wd*w); w += v``. Returns (param, velocity)."""
    if param.shape != grad.shape or param.shape != velocity.shape:
        raise ValueError(f"shape mismatch: {param.shape}, {grad.shape}, {velocity.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient")
    g = grad + wd * param if wd else grad
    velocity *= momentum
    velocity -= lr * g
    param += velocity
    return param, velocity


def decays(name: str) -> bool:
    """Weight decay touches conv / dense weights only, never BN or biases."""
    return name.endswith(".weight")


@dataclass
class SGD:
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict, lr: float) -> None:
        for name, param in params.items():
            v = self.velocity.get(name)
            if v is None:
                v = self.velocity[name] = np.zeros_like(param)
            sgd_step(param, grads[name], v, np.float32(lr), np.float32(self.momentum),
                     np.float32(self.weight_decay) if decays(name) else 0.0)


def train_epoch(net: Network, train: Dataset, cfg: TrainConfig, rng: np.random.Generator,
                optimizer: SGD, lr: float):
    """One shuffled pass; returns (mean_loss, train_accuracy) from train-mode logits."""
    order = rng.permutation(len(train))
    loss_sum = 0.0
    correct = 0
    for start in range(0, len(order), cfg.batch):
        idx = order[start:start + cfg.batch]
        images = train.images[idx]
        if cfg.augment is not None:
            images = augment_batch(images, cfg.augment, rng)
        labels = train.labels[idx]
        logits = net.forward(inputs(train, images), train=True)
        loss, dlogits = softmax_xent(logits, labels)
        if not math.isfinite(loss):
            raise NonFiniteError(f"non-finite loss at sample offset {start}")
        grads = net.backward(dlogits)
        optimizer.step(net.params, grads, lr)
        loss_sum += loss * len(idx)
        correct += int((logits.argmax(axis=1) == labels).sum())
    return loss_sum / len(order), correct / len(order)


def fit(net: Network, train: Dataset, test: Dataset | None, cfg: TrainConfig,
        log_path: str | None = None, on_epoch=None) -> list[dict]:
    """Run ``cfg.epochs`` epochs; one log row per epoch (also written as CSV)."""
    rng = make_rng(cfg.seed)
    optimizer = SGD(cfg.momentum, cfg.weight_decay)
    rows = []
    fh = open(log_path, "w", newline="") if log_path else None
    try:
        writer = csv.DictWriter(fh, LOG_COLUMNS, lineterminator="\n") if fh else None
        if writer:
            writer.writeheader()
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            lr = lr_at(cfg, epoch)
            loss, acc = train_epoch(net, train, cfg, rng, optimizer, lr)
            test_acc = evaluate(net, inputs(test), test.labels)[0] if test is not None and len(test) else float("nan")
            row = dict(epoch=epoch + 1, lr=repr(lr), train_loss=repr(loss), train_acc=repr(acc),
                       test_acc=repr(test_acc), seconds=f"{time.perf_counter() - t0:.3f}")
            rows.append(row)
            if writer:
                writer.writerow(row)
                fh.flush()
            if on_epoch:
                on_epoch(row)
    finally:
        if fh:
            fh.close()
    return rows
