"""Forward and backward kernels for every layer type the networks use.

Each kernel exists as a plain function (``conv_forward``, ``bn_forward`` ...)
and is wrapped by a small layer class that owns parameters, gradients and the
backward cache. A cache exists only after a train-mode forward and is
dropped by ``backward``.
"""
from __future__ import annotations

import numpy as np

from . import opcount
from .tensor import DTYPE, col2im, conv_output_size, he_init, im2col

SUPPORTED_KERNELS = (1, 2, 3, 5, 7, 11)
BN_MOMENTUM = 0.95
BN_EPS = 1e-5


class CacheError(RuntimeError):
    """Backward called without a matching train-mode forward."""


# ---------------------------------------------------------------------------
# functional kernels


def conv_forward(x, weight, bias=None, pad=0, stride=1, groups=1):
    """Cross-correlation (no kernel flip) via im2col + matrix product.

    Returns ``(y, cols)``; ``cols`` is the list of per-group im2col matrices
    needed by :func:`conv_backward`.
    """
    n, c, h, w = x.shape
    out_c, in_per_group, k, k2 = weight.shape
    if k != k2:
        raise ValueError("only square kernels are supported")
    if c != in_per_group * groups:
        raise ValueError(f"channel mismatch: input has {c}, weights expect {in_per_group * groups}")
    if out_c % groups:
        raise ValueError(f"out channels {out_c} not divisible by groups {groups}")
    h_out = conv_output_size(h, k, pad, stride)
    w_out = conv_output_size(w, k, pad, stride)
    out_per_group = out_c // groups
    y = np.empty((out_c, n * h_out * w_out), dtype=np.result_type(x, weight))
    cols = []
    for g in range(groups):
        xg = x[:, g * in_per_group:(g + 1) * in_per_group]
        col = im2col(xg, k, pad, stride)
        wg = weight[g * out_per_group:(g + 1) * out_per_group].reshape(out_per_group, -1)
        y[g * out_per_group:(g + 1) * out_per_group] = wg @ col
        opcount.record(macc=wg.shape[0] * wg.shape[1] * col.shape[1])
        cols.append(col)
    y = y.reshape(out_c, n, h_out, w_out).transpose(1, 0, 2, 3)
    if bias is not None:
        y = y + bias.reshape(1, -1, 1, 1)
        opcount.record(add=y.size)
    return np.ascontiguousarray(y), cols


def conv_backward(dy, x_shape, weight, cols, pad=0, stride=1, groups=1, has_bias=False):
    """Gradients of :func:`conv_forward`; returns ``(dx, dweight, dbias)``."""
    out_c, in_per_group, k, _ = weight.shape
    n = dy.shape[0]
    out_per_group = out_c // groups
    dy_mat = dy.transpose(1, 0, 2, 3).reshape(out_c, -1)
    dweight = np.empty_like(weight)
    dx = np.empty(x_shape, dtype=dy.dtype)
    gshape = (n, in_per_group, x_shape[2], x_shape[3])
    for g in range(groups):
        dyg = dy_mat[g * out_per_group:(g + 1) * out_per_group]
        wg = weight[g * out_per_group:(g + 1) * out_per_group].reshape(out_per_group, -1)
        dweight[g * out_per_group:(g + 1) * out_per_group] = (dyg @ cols[g].T).reshape(
            out_per_group, in_per_group, k, k
        )
        dx[:, g * in_per_group:(g + 1) * in_per_group] = col2im(wg.T @ dyg, gshape, k, pad, stride)
    dbias = dy.sum(axis=(0, 2, 3)) if has_bias else None
    return dx, dweight, dbias


def bn_forward(x, gamma, beta, running_mean, running_var, train, momentum=BN_MOMENTUM, eps=BN_EPS):
    """Batch normalization over N, H, W per channel.

    In train mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``, using the
    biased batch variance. Returns ``(y, cache)``; cache is None in eval mode.
    """
    c = x.shape[1]
    if gamma.shape[0] != c:
        raise ValueError(f"channel mismatch: input has {c}, BN expects {gamma.shape[0]}")
    shape = (1, c, 1, 1)
    if train:
        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise ValueError("batch norm needs n*h*w >= 2 in train mode")
        mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
        var = x.var(axis=(0, 2, 3), dtype=np.float64)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean.astype(x.dtype).reshape(shape)) * inv_std.astype(x.dtype).reshape(shape)
        y = gamma.reshape(shape) * xhat + beta.reshape(shape)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean.astype(running_mean.dtype)
        running_var *= momentum
        running_var += (1.0 - momentum) * var.astype(running_var.dtype)
        return y, (xhat, inv_std.astype(x.dtype), m)
    scale = gamma / np.sqrt(running_var + eps)
    y = (x - running_mean.reshape(shape)) * scale.reshape(shape) + beta.reshape(shape)
    opcount.record(macc=x.size, add=x.size, div=c)
    return y.astype(x.dtype, copy=False), None


def bn_backward(dy, gamma, cache):
    xhat, inv_std, m = cache
    dbeta = dy.sum(axis=(0, 2, 3))
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    shape = (1, -1, 1, 1)
    dx = (gamma * inv_std).reshape(shape) / m * (
        m * dy - dbeta.reshape(shape) - xhat * dgamma.reshape(shape)
    )
    return dx, dgamma, dbeta


def relu_forward(x):
    opcount.record(comp=x.size)
    return np.maximum(x, 0)


def relu_backward(dy, x):
    return dy * (x > 0)


def maxpool_forward(x, k=2, stride=2):
    """Max over k x k windows. Returns ``(y, argmax)``.

    ``argmax`` holds the flat offset ``ki*k + kj`` of the winner inside each
    window; ties go to the lowest offset.
    """
    n, c, h, w = x.shape
    if k == 2 and stride == 2 and (h % 2 or w % 2):
        raise ValueError(f"2x2 max-pool needs even extents, got {h}x{w}")
    h_out = conv_output_size(h, k, 0, stride)
    w_out = conv_output_size(w, k, 0, stride)
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :h_out, :w_out].reshape(n, c, h_out, w_out, k * k)
    argmax = win.argmax(axis=-1)
    y = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    opcount.record(comp=(k * k - 1) * y.size)
    return np.ascontiguousarray(y), argmax


def maxpool_backward(dy, argmax, x_shape, k=2, stride=2):
    dx = np.zeros(x_shape, dtype=dy.dtype)
    h_out, w_out = dy.shape[2], dy.shape[3]
    h_stop = stride * (h_out - 1) + 1
    w_stop = stride * (w_out - 1) + 1
    for ki in range(k):
        for kj in range(k):
            hit = argmax == ki * k + kj
            dx[:, :, ki:ki + h_stop:stride, kj:kj + w_stop:stride] += dy * hit
    return dx


def dropout_forward(x, p, train, rng=None):
    """Inverted dropout. Returns ``(y, keep_mask)``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x, np.ones(x.shape, dtype=bool)
    keep = rng.random(x.shape, dtype=np.float32) >= p
    return x * keep * x.dtype.type(1.0 / (1.0 - p)), keep


def dropout_backward(dy, keep, p):
    return dy * keep * dy.dtype.type(1.0 / (1.0 - p))


def global_maxpool(x):
    """Per-channel spatial max; returns ``(y, argmax)`` with y of shape (n, c, 1, 1)."""
    n, c, h, w = x.shape
    flat = x.reshape(n, c, h * w)
    argmax = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, argmax[..., None], axis=-1).reshape(n, c, 1, 1)
    opcount.record(comp=n * c * (h * w - 1))
    return y, argmax


def global_maxpool_backward(dy, argmax, x_shape):
    n, c, h, w = x_shape
    dx = np.zeros((n, c, h * w), dtype=dy.dtype)
    np.put_along_axis(dx, argmax[..., None], dy.reshape(n, c, 1), axis=-1)
    return dx.reshape(x_shape)


def dense_forward(x, weight, bias):
    """``y = W x + b`` per sample; input is flattened to (n, c*h*w)."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weight.shape[1]:
        raise ValueError(f"dense expects {weight.shape[1]} inputs, got {flat.shape[1]}")
    y = flat @ weight.T + bias
    opcount.record(macc=weight.size * flat.shape[0], add=y.size)
    return y


def dense_backward(dy, x, weight):
    flat = x.reshape(x.shape[0], -1)
    return (dy @ weight).reshape(x.shape), dy.T @ flat, dy.sum(axis=0)


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    n, classes = logits.shape
    if labels.shape != (n,):
        raise ValueError("labels must be a vector with one entry per row")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")
    z = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad /= n
    return float(loss), grad.astype(logits.dtype)


# ---------------------------------------------------------------------------
# layer objects


class Layer:
    kind = "layer"

    def __init__(self):
        self.name = self.kind
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.cache = None

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _pop_cache(self):
        if self.cache is None:
            raise CacheError(f"{self.name}: backward without a train-mode forward")
        cache, self.cache = self.cache, None
        return cache


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, in_c, out_c, k=3, stride=1, pad=None, groups=1, bias=False,
                 rng=None, dtype=DTYPE):
        super().__init__()
        if k not in SUPPORTED_KERNELS:
            raise ValueError(f"unsupported kernel {k}")
        if in_c % groups or out_c % groups:
            raise ValueError(f"channels {in_c}->{out_c} not divisible by groups {groups}")
        self.k, self.stride, self.groups = k, stride, groups
        self.pad = (k - 1) // 2 if pad is None else pad
        fan_in = (in_c // groups) * k * k
        shape = (out_c, in_c // groups, k, k)
        if rng is None:
            self.params["weight"] = np.zeros(shape, dtype=dtype)
        else:
            self.params["weight"] = he_init(shape, fan_in, rng, dtype)
        if bias:
            self.params["bias"] = np.zeros(out_c, dtype=dtype)

    def forward(self, x, train=False):
        y, cols = conv_forward(x, self.params["weight"], self.params.get("bias"),
                               self.pad, self.stride, self.groups)
        opcount.record(activations=y.size)
        if train:
            self.cache = (x.shape, cols)
        return y

    def backward(self, dy):
        x_shape, cols = self._pop_cache()
        dx, dw, db = conv_backward(dy, x_shape, self.params["weight"], cols, self.pad,
                                   self.stride, self.groups, "bias" in self.params)
        self.grads["weight"] = dw
        if db is not None:
            self.grads["bias"] = db
        return dx


class BatchNorm2d(Layer):
    kind = "bn"

    def __init__(self, c, momentum=BN_MOMENTUM, eps=BN_EPS, dtype=DTYPE):
        super().__init__()
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must be in (0, 1)")
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(c, dtype=dtype)
        self.params["beta"] = np.zeros(c, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(c, dtype=dtype)
        self.buffers["running_var"] = np.ones(c, dtype=dtype)

    def forward(self, x, train=False):
        y, cache = bn_forward(x, self.params["gamma"], self.params["beta"],
                              self.buffers["running_mean"], self.buffers["running_var"],
                              train, self.momentum, self.eps)
        if train:
            self.cache = cache
        return y

    def backward(self, dy):
        dx, dgamma, dbeta = bn_backward(dy, self.params["gamma"], self._pop_cache())
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        y = relu_forward(x)
        if train:
            self.cache = x
        return y

    def backward(self, dy):
        return relu_backward(dy, self._pop_cache())


class MaxPool2d(Layer):
    kind = "pool"

    def __init__(self, k=2, stride=2):
        super().__init__()
        self.k, self.stride = k, stride

    def forward(self, x, train=False):
        y, argmax = maxpool_forward(x, self.k, self.stride)
        opcount.record(activations=y.size)
        if train:
            self.cache = (x.shape, argmax)
        return y

    def backward(self, dy):
        x_shape, argmax = self._pop_cache()
        return maxpool_backward(dy, argmax, x_shape, self.k, self.stride)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, p, rng=None):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng

    def forward(self, x, train=False):
        y, keep = dropout_forward(x, self.p, train, self.rng)
        if train:
            self.cache = keep
        return y

    def backward(self, dy):
        keep = self._pop_cache()
        if self.p == 0.0:
            return dy
        return dropout_backward(dy, keep, self.p)


class GlobalMaxPool(Layer):
    kind = "gpool"

    def forward(self, x, train=False):
        y, argmax = global_maxpool(x)
        opcount.record(activations=y.size)
        if train:
            self.cache = (x.shape, argmax)
        return y

    def backward(self, dy):
        x_shape, argmax = self._pop_cache()
        return global_maxpool_backward(dy, argmax, x_shape)


class Dense(Layer):
    kind = "fc"

    def __init__(self, in_features, out_features, rng=None, dtype=DTYPE):
        super().__init__()
        shape = (out_features, in_features)
        if rng is None:
            self.params["weight"] = np.zeros(shape, dtype=dtype)
        else:
            self.params["weight"] = he_init(shape, in_features, rng, dtype)
        self.params["bias"] = np.zeros(out_features, dtype=dtype)

    def forward(self, x, train=False):
        y = dense_forward(x, self.params["weight"], self.params["bias"])
        opcount.record(activations=y.size)
        if train:
            self.cache = x
        return y

    def backward(self, dy):
        x = self._pop_cache()
        dx, dw, db = dense_backward(dy, x, self.params["weight"])
        self.grads["weight"] = dw
        self.grads["bias"] = db
        return dx


class LRN(Layer):
    """Parameter-free placeholder for local response normalization (identity)."""

    kind = "lrn"

    def forward(self, x, train=False):
        if train:
            self.cache = True
        return x

    def backward(self, dy):
        self._pop_cache()
        return dy
