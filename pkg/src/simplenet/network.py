"""Executable layer stacks built from an :class:`~simplenet.archspec.ArchSpec`."""
from __future__ import annotations

import hashlib

import numpy as np

from . import layers as L
from .archspec import ArchSpec, check, render_arch
from .tensor import DTYPE, check_finite, make_rng


class Network:
    """Ordered layer stack with named parameters and BN running statistics.

    Parameter names look like ``conv3.weight`` or ``bn3.gamma``; running
    statistics like ``bn3.running_mean``.
    """

    def __init__(self, spec: ArchSpec, layers: list[L.Layer], dtype=DTYPE):
        self.spec = spec
        self.layers = layers
        self.dtype = np.dtype(dtype)
        self._trained = False

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {f"{layer.name}.{k}": v for layer in self.layers for k, v in layer.params.items()}

    @property
    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{layer.name}.{k}": v for layer in self.layers for k, v in layer.buffers.items()}

    def state(self) -> dict[str, np.ndarray]:
        """Parameters followed by running statistics, in network order."""
        return {**self.params, **self.buffers}

    def state_hash(self) -> str:
        digest = hashlib.sha256()
        for name, value in self.state().items():
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(value).tobytes())
        return digest.hexdigest()

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x)
        expected = self.spec.input
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(expected):
            raise ValueError(f"input shape {x.shape} does not match (n, {expected[0]}, {expected[1]}, {expected[2]})")
        x = x.astype(self.dtype, copy=False)
        for layer in self.layers:
            x = layer.forward(x, train)
        self._trained = train
        return check_finite(x, "logits")

    def backward(self, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Back-propagate ``dL/dlogits``; returns gradients keyed like :attr:`params`."""
        if not self._trained:
            raise L.CacheError("backward requires a preceding train-mode forward")
        self._trained = False
        dy = np.asarray(dlogits, dtype=self.dtype)
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return {f"{layer.name}.{k}": layer.grads[k] for layer in self.layers for k in layer.params}

    def predict_logits(self, x: np.ndarray, batch: int = 256) -> np.ndarray:
        return np.concatenate([self.forward(x[i:i + batch]) for i in range(0, len(x), batch)])

    def arch_text(self) -> str:
        return render_arch(self.spec)


def build(spec: ArchSpec, rng: np.random.Generator | int = 0, dtype=DTYPE) -> Network:
    """Instantiate ``spec`` with He-initialized weights.

    With ``norm bn`` each conv becomes conv -> BN -> ReLU (no conv bias);
    with ``norm none`` conv(+bias) -> ReLU. Hidden ``dense`` layers are
    followed by ReLU, the final ``fc`` emits logits.
    """
    check(spec)
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    dropout_rng = make_rng(int(rng.integers(2**63)))
    use_bn = spec.norm == "bn"
    c, h, w = spec.input
    out: list[L.Layer] = []
    counts: dict[str, int] = {}
    features = c * h * w

    def add(layer, prefix):
        counts[prefix] = counts.get(prefix, 0) + 1
        layer.name = prefix if prefix in ("gpool", "fc") else f"{prefix}{counts[prefix]}"
        out.append(layer)

    for layer in spec.layers:
        if layer.kind == "conv":
            add(L.Conv2d(c, layer.out, layer.k, layer.stride, layer.padding, layer.groups,
                         bias=not use_bn, rng=rng, dtype=dtype), "conv")
            idx = counts["conv"]
            if use_bn:
                bn = L.BatchNorm2d(layer.out, dtype=dtype)
                bn.name = f"bn{idx}"
                out.append(bn)
            relu = L.ReLU()
            relu.name = f"relu{idx}"
            out.append(relu)
            h = (h + 2 * layer.padding - layer.k) // layer.stride + 1
            w = (w + 2 * layer.padding - layer.k) // layer.stride + 1
            c = layer.out
            features = c * h * w
        elif layer.kind == "pool":
            add(L.MaxPool2d(layer.k, layer.stride), "pool")
            h = (h - layer.k) // layer.stride + 1
            w = (w - layer.k) // layer.stride + 1
            features = c * h * w
        elif layer.kind == "dropout":
            add(L.Dropout(layer.p, dropout_rng), "drop")
        elif layer.kind == "lrn":
            add(L.LRN(), "lrn")
        elif layer.kind == "gpool":
            add(L.GlobalMaxPool(), "gpool")
            h = w = 1
            features = c
        elif layer.kind == "dense":
            add(L.Dense(features, layer.out, rng=rng, dtype=dtype), "dense")
            relu = L.ReLU()
            relu.name = f"dense_relu{counts['dense']}"
            out.append(relu)
            features = layer.out
        elif layer.kind == "fc":
            add(L.Dense(features, layer.out, rng=rng, dtype=dtype), "fc")
            features = layer.out
    return Network(spec, out, dtype)


def evaluate(net: Network, images: np.ndarray, labels: np.ndarray, batch: int = 256):
    """Top-1 accuracy and mean cross-entropy in eval mode.

    Every sample is visited exactly once; ties in the argmax go to the
    lowest class index.
    """
    n = len(labels)
    if n == 0:
        raise ValueError("cannot evaluate an empty dataset")
    correct = 0
    loss_sum = 0.0
    for i in range(0, n, batch):
        logits = net.forward(images[i:i + batch], train=False)
        y = labels[i:i + batch]
        loss, _ = L.softmax_xent(logits, y)
        loss_sum += loss * len(y)
        correct += int((logits.argmax(axis=1) == y).sum())
    return correct / n, loss_sum / n
