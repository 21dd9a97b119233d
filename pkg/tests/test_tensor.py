import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import direct_conv
from simplenet.tensor import (NonFiniteError, Shape4, check_finite, col2im, he_init, im2col, make_rng,
                              tensor_create)


@pytest.mark.parametrize("shape, fill, count", [
    ((1, 1, 2, 2), 0.0, 4),
    ((2, 3, 4, 4), 1.5, 96),
    ((1, 1, 1, 1), -2.0, 1),
])
def test_tensor_create_fill(shape, fill, count):
    t = tensor_create(shape, fill)
    assert t.shape == shape and t.size == count and t.dtype == np.float32
    assert np.all(t == np.float32(fill))


@pytest.mark.parametrize("shape", [(0, 1, 1, 1), (1, -1, 2, 2), (1, 1, 1)])
def test_tensor_create_rejects_bad_shapes(shape):
    with pytest.raises(ValueError):
        tensor_create(shape)


def test_tensor_create_overflow():
    with pytest.raises(OverflowError):
        tensor_create((2**20, 2**20, 2**20, 2**20))


def test_shape4_size():
    assert Shape4(2, 3, 4, 5).size == 120


@given(st.floats(allow_nan=False, allow_infinity=False, width=32))
def test_element_round_trip(value):
    t = tensor_create((1, 2, 2, 1), value)
    t[0, 1, 0, 0] = value
    assert float(t[0, 1, 0, 0]) == value


def test_he_variance_fan_in_2():
    x = he_init((1000, 1000, 1, 1), 2, make_rng(0))
    assert abs(x.var(dtype=np.float64) - 1.0) < 0.02


def test_he_mean_fan_in_8():
    x = he_init((1000, 1000, 1, 1), 8, make_rng(1))
    assert abs(x.mean(dtype=np.float64)) < 0.005


def test_he_deterministic():
    a = he_init((4, 3, 3, 3), 27, make_rng(5))
    b = he_init((4, 3, 3, 3), 27, make_rng(5))
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != he_init((4, 3, 3, 3), 27, make_rng(6)).tobytes()


def test_he_rejects_zero_fan_in():
    with pytest.raises(ValueError):
        he_init((1, 1, 1, 1), 0, make_rng(0))


def test_rng_is_counter_based():
    assert type(make_rng(0).bit_generator).__name__ == "Philox"


def test_check_finite():
    check_finite(np.ones(3))
    with pytest.raises(NonFiniteError):
        check_finite(np.array([1.0, np.nan]))


def test_im2col_identity():
    x = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2)
    cols = im2col(x, 1)
    assert cols.shape == (1, 4)
    np.testing.assert_array_equal(cols[0], x.ravel())


def test_im2col_shape():
    assert im2col(np.zeros((1, 3, 32, 32), np.float32), 3, 1, 1).shape == (27, 1024)


def test_im2col_kernel_too_large():
    with pytest.raises(ValueError):
        im2col(np.zeros((1, 1, 2, 2), np.float32), 5, 1, 1)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 2), c=st.integers(1, 3), h=st.integers(3, 8), k=st.sampled_from([1, 2, 3, 5]),
       stride=st.integers(1, 2), pad=st.integers(0, 2), seed=st.integers(0, 2**32 - 1))
def test_im2col_conv_matches_direct(n, c, h, k, stride, pad, seed):
    if h + 2 * pad < k or (h + 2 * pad - k) % stride:
        return
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, c, h, h))
    w = r.standard_normal((4, c, k, k))
    cols = im2col(x, k, pad, stride)
    ho = (h + 2 * pad - k) // stride + 1
    y = (w.reshape(4, -1) @ cols).reshape(4, n, ho, ho).transpose(1, 0, 2, 3)
    ref = direct_conv(x, w, pad=pad, stride=stride)
    np.testing.assert_allclose(y, ref, rtol=1e-5, atol=1e-5 * np.abs(ref).max())


@settings(max_examples=30, deadline=None)
@given(c=st.integers(1, 3), h=st.integers(2, 7), k=st.sampled_from([1, 2, 3]),
       pad=st.integers(0, 1), stride=st.integers(1, 2), seed=st.integers(0, 2**32 - 1))
def test_col2im_is_adjoint(c, h, k, pad, stride, seed):
    if h + 2 * pad < k or (h + 2 * pad - k) % stride:
        return
    r = np.random.default_rng(seed)
    x = r.standard_normal((2, c, h, h))
    cols = im2col(x, k, pad, stride)
    m = r.standard_normal(cols.shape)
    lhs = float((cols * m).sum())
    rhs = float((x * col2im(m, x.shape, k, pad, stride)).sum())
    assert abs(lhs - rhs) <= 1e-5 * max(abs(lhs), 1.0)
