import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from protoseg.exceptions import ShapeMismatch, ZeroVector
from protoseg.numerics import (
    argmax_last_axis,
    avg_pool2,
    concat_channels,
    l2_normalize,
    softmax_last_axis,
    upsample_nearest,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "v, expected",
    [([3, 4], [0.6, 0.8]), ([1, 0, 0], [1, 0, 0]), ([2, 2, 2, 2], [0.5, 0.5, 0.5, 0.5])],
)
def test_l2_normalize_examples(v, expected):
    np.testing.assert_allclose(l2_normalize(v), expected, atol=1e-12)


def test_l2_normalize_zero():
    with pytest.raises(ZeroVector):
        l2_normalize([0.0, 0.0])
    with pytest.raises(ZeroVector):
        l2_normalize([1e-31, 0.0])


@given(arrays(np.float64, st.integers(1, 16), elements=st.floats(-1e3, 1e3)))
def test_l2_normalize_unit_and_idempotent(v):
    if np.linalg.norm(v) < 1e-10:
        return
    u = l2_normalize(v)
    assert abs(np.linalg.norm(u) - 1) < 1e-12
    np.testing.assert_allclose(l2_normalize(u), u, atol=1e-12)


@pytest.mark.parametrize(
    "t, expected",
    [([0, 0], [0.5, 0.5]), ([math.log(2), 0], [2 / 3, 1 / 3]), ([1000, 1000], [0.5, 0.5])],
)
def test_softmax_examples(t, expected):
    np.testing.assert_allclose(softmax_last_axis(t), expected, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_sums_to_one(t):
    s = softmax_last_axis(t)
    assert np.all(s > 0) or np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(np.isfinite(s))


def test_argmax_examples():
    assert argmax_last_axis([0.1, 0.7, 0.2]) == 1
    assert argmax_last_axis([0.5, 0.5]) == 0
    out = argmax_last_axis(np.array([[[1, 2, 3]], [[3, 2, 1]]]))
    np.testing.assert_array_equal(out, [[2], [0]])


@given(arrays(np.int64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.integers(-40, 40)),
       st.floats(0.01, 10))
def test_argmax_monotone_invariance(ticks, slope):
    # values on a 1/8 grid: distinct entries stay distinct after exp and affine maps
    t = ticks / 8.0
    base = argmax_last_axis(t)
    np.testing.assert_array_equal(argmax_last_axis(np.exp(t)), base)
    np.testing.assert_array_equal(argmax_last_axis(slope * t + 3.0), base)


def test_upsample_examples():
    np.testing.assert_array_equal(upsample_nearest(np.full((1, 1, 1), 5.0), 2, 2), np.full((2, 2, 1), 5.0))
    eye = np.eye(2)[:, :, None]
    up = upsample_nearest(eye, 4, 4)[:, :, 0]
    np.testing.assert_array_equal(up, np.kron(np.eye(2), np.ones((2, 2))))
    col = np.array([[[1.0]], [[2.0]]])
    np.testing.assert_array_equal(upsample_nearest(col, 4, 1)[:, 0, 0], [1, 1, 2, 2])
    with pytest.raises(ShapeMismatch):
        upsample_nearest(eye, 1, 1)


@settings(max_examples=50)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4))
def test_upsample_then_subsample_roundtrip(h, w, d, fy, fx):
    t = np.arange(h * w * d, dtype=np.float64).reshape(h, w, d)
    up = upsample_nearest(t, h * fy, w * fx)
    np.testing.assert_array_equal(up[::fy, ::fx], t)


def test_concat_channels():
    out = concat_channels([np.array([[[1.0]]]), np.array([[[2.0]]])])
    np.testing.assert_array_equal(out, [[[1.0, 2.0]]])
    a = np.ones((2, 2, 3))
    np.testing.assert_array_equal(concat_channels([a, np.zeros((2, 2, 0))]), a)
    assert concat_channels([np.ones((2, 2, 1)), np.ones((2, 2, 2))]).shape == (2, 2, 3)
    with pytest.raises(ShapeMismatch):
        concat_channels([np.ones((2, 2, 1)), np.ones((3, 2, 1))])


def test_avg_pool2():
    t = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    np.testing.assert_array_equal(avg_pool2(t)[:, :, 0], [[2.5, 4.5], [10.5, 12.5]])
