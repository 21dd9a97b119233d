"""Rank-4 tensor helpers, seeded initialization and the im2col transform.

Tensors are plain ``numpy.ndarray`` objects in N, C, H, W row-major order.
Parameters and activations are float32; float64 is accepted everywhere so
gradient checks can run at double precision.

Random streams use numpy's ``Philox`` bit generator (a counter-based
generator), so a seed fully determines every draw within one build.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

DTYPE = np.float32
_INDEX_MAX = np.iinfo(np.intp).max


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up in a tensor."""


class Shape4(NamedTuple):
    n: int
    c: int
    h: int
    w: int

    @property
    def size(self) -> int:
        return self.n * self.c * self.h * self.w


def _check_shape(shape) -> Shape4:
    dims = tuple(int(d) for d in shape)
    if len(dims) != 4:
        raise ValueError(f"expected 4 dimensions (n, c, h, w), got {dims}")
    shape = Shape4(*dims)
    if min(shape) < 1:
        raise ValueError(f"all dimensions must be >= 1, got {tuple(shape)}")
    total = 1
    for d in shape:
        total *= d
        if total > _INDEX_MAX:
            raise OverflowError(f"element count of {tuple(shape)} overflows the index type")
    return shape


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox generator; the only RNG constructor used in this package."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def tensor_create(shape, fill: float = 0.0, dtype=DTYPE) -> np.ndarray:
    shape = _check_shape(shape)
    return np.full(shape, fill, dtype=dtype)


def he_init(shape, fan_in: int, rng: np.random.Generator, dtype=DTYPE) -> np.ndarray:
    """Zero-mean normal draws with variance ``2 / fan_in``.

    ``shape`` may have any rank (dense weights are rank 2).
    """
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(tuple(shape), dtype=np.float32) * np.float32(std)).astype(dtype, copy=False)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {what}")
    return x


def conv_output_size(size: int, k: int, pad: int, stride: int) -> int:
    span = size + 2 * pad - k
    if span < 0:
        raise ValueError(f"kernel {k} larger than padded extent {size + 2 * pad}")
    if span % stride:
        raise ValueError(
            f"non-integral output size: ({size} + 2*{pad} - {k}) / {stride}"
        )
    return span // stride + 1


def im2col(x: np.ndarray, k: int, pad: int = 0, stride: int = 1) -> np.ndarray:
    """Unroll receptive fields into columns.

    Returns a ``(c*k*k, n*h_out*w_out)`` matrix. Rows are ordered (c, ki, kj),
    columns (n, i, j), matching a ``(out, c*k*k)`` weight matrix.
    """
    n, c, h, w = x.shape
    h_out = conv_output_size(h, k, pad, stride)
    w_out = conv_output_size(w, k, pad, stride)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    # (n, c, H', W', k, k) view; subsample by stride
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :h_out, :w_out]
    # -> (c, k, k, n, h_out, w_out)
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * h_out * w_out)


def col2im(cols: np.ndarray, x_shape, k: int, pad: int = 0, stride: int = 1) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back onto the input grid."""
    n, c, h, w = x_shape
    h_out = conv_output_size(h, k, pad, stride)
    w_out = conv_output_size(w, k, pad, stride)
    blocks = cols.reshape(c, k, k, n, h_out, w_out).transpose(3, 0, 1, 2, 4, 5)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    h_stop = stride * (h_out - 1) + 1
    w_stop = stride * (w_out - 1) + 1
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + h_stop:stride, kj:kj + w_stop:stride] += blocks[:, :, ki, kj]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)
