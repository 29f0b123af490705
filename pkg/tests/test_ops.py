import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentwire import ops
from latentwire.errors import CacheError, InvalidGeometryError, ShapeMismatchError
from latentwire.initializers import glorot_limit, glorot_uniform
from latentwire.losses import cross_entropy_loss, mse_loss
from latentwire.errors import LabelRangeError

from oracles import conv2d_oracle, dense_oracle, maxpool2d_oracle


def rng(seed=0):
    return np.random.default_rng(seed)


# --- conv2d ---------------------------------------------------------------

def test_conv_shape_table_row():
    x = rng().random((32, 32, 3))
    w = rng().random((3, 3, 3, 32))
    y, _ = ops.conv2d(x, w, np.zeros(32), 1, "valid")
    assert y.shape == (30, 30, 32)


def test_conv_zero_weights_zero_output():
    x = rng().random((8, 8, 2))
    y, _ = ops.conv2d(x, np.zeros((3, 3, 2, 4)), np.zeros(4), 1, "same")
    assert np.all(y == 0)


def test_conv_matches_direct_loop_oracle():
    r = rng(1)
    x = r.random((5, 5, 2))
    w = r.random((3, 3, 2, 4))
    b = r.random(4)
    y, _ = ops.conv2d(x, w, b, 1, "valid")
    assert np.abs(y - conv2d_oracle(x, w, b)).max() < 1e-12


def test_conv_wide_input_path_matches_oracle():
    # channel count above the einsum/shift dispatch threshold
    r = rng(2)
    x = r.random((6, 7, 16))
    w = r.random((3, 3, 16, 4))
    b = r.random(4)
    for stride, padding in [(1, "valid"), (2, "same")]:
        y, _ = ops.conv2d(x, w, b, stride, padding)
        assert np.abs(y - conv2d_oracle(x, w, b, stride, padding)).max() < 1e-11


def test_conv_channel_mismatch():
    with pytest.raises(ShapeMismatchError):
        ops.conv2d(rng().random((6, 6, 3)), rng().random((3, 3, 2, 4)), np.zeros(4))


def test_conv_too_small_input():
    with pytest.raises(InvalidGeometryError):
        ops.conv2d(rng().random((2, 2, 1)), rng().random((3, 3, 1, 2)), np.zeros(2))


def test_conv_batched_equals_per_sample():
    r = rng(3)
    xs = r.random((4, 6, 6, 3)).astype(np.float32)
    w = r.random((3, 3, 3, 5)).astype(np.float32)
    b = r.random(5).astype(np.float32)
    yb, _ = ops.conv2d(xs, w, b, 1, "same")
    for i in range(4):
        yi, _ = ops.conv2d(xs[i], w, b, 1, "same")
        np.testing.assert_allclose(yb[i], yi, rtol=1e-6)


# --- maxpool ---------------------------------------------------------------

def test_maxpool_known_windows():
    x = np.arange(1, 17, dtype=float).reshape(4, 4, 1)
    y, _ = ops.maxpool2d(x, 2, 2)
    assert y[..., 0].tolist() == [[6, 8], [14, 16]]


def test_maxpool_constant_input():
    x = np.full((5, 5, 2), 3.5)
    y, _ = ops.maxpool2d(x, 2, 2)
    assert np.all(y == 3.5)


def test_maxpool_matches_window_oracle():
    r = rng(4)
    x = r.random((7, 7, 3))
    y, _ = ops.maxpool2d(x, 2, 1)
    assert y.shape == (6, 6, 3)
    assert np.abs(y - maxpool2d_oracle(x, 2, 1)).max() == 0


def test_maxpool_pool_exceeds_input():
    with pytest.raises(InvalidGeometryError):
        ops.maxpool2d(rng().random((3, 3, 1)), 4, 1)


# --- upsample ---------------------------------------------------------------

def test_upsample_replication():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
    y, _ = ops.upsample2d(x, 2)
    expect = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
    assert y[..., 0].tolist() == expect


def test_upsample_factor_one_identity():
    x = rng().random((3, 4, 2))
    y, _ = ops.upsample2d(x, 1)
    np.testing.assert_array_equal(y, x)


def test_pool_then_upsample_constant_roundtrip():
    x = np.full((6, 6, 2), 0.7)
    pooled, _ = ops.maxpool2d(x, 2, 2)
    y, _ = ops.upsample2d(pooled, 2)
    np.testing.assert_array_equal(y, x)


# --- dense -------------------------------------------------------------------

def test_dense_identity():
    x = rng().random(5)
    y, _ = ops.dense(x, np.eye(5), np.zeros(5))
    np.testing.assert_array_equal(y, x)


def test_dense_hand_arithmetic():
    y, _ = ops.dense(np.array([1.0, 2.0]), np.eye(2), np.array([3.0, 4.0]))
    assert y.tolist() == [4.0, 6.0]


def test_dense_matches_dot_oracle():
    r = rng(5)
    x, w, b = r.random(8), r.random((8, 5)), r.random(5)
    y, _ = ops.dense(x, w, b)
    assert np.abs(y - dense_oracle(x, w, b)).max() < 1e-12


def test_dense_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        ops.dense(rng().random(4), rng().random((5, 2)), np.zeros(2))


# --- activations ---------------------------------------------------------------

def test_relu_definition():
    y, _ = ops.activation(np.array([-1.0, 0.0, 2.0]), "relu")
    assert y.tolist() == [0.0, 0.0, 2.0]


def test_sigmoid_midpoint():
    y, _ = ops.activation(np.zeros(1), "sigmoid")
    assert y[0] == 0.5


def test_softmax_uniform():
    y, _ = ops.activation(np.array([2.0, 2.0, 2.0]), "softmax")
    np.testing.assert_allclose(y, [1 / 3] * 3, atol=1e-12)


def test_unknown_activation():
    with pytest.raises(ValueError):
        ops.activation(np.zeros(3), "tanh")


@given(st.integers(2, 8), st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_softmax_rows_sum_to_one(b, k, seed):
    x = np.random.default_rng(seed).standard_normal((b, k)) * 20
    y, _ = ops.activation(x, "softmax")
    np.testing.assert_allclose(y.sum(axis=-1), np.ones(b), atol=1e-9)


# --- dropout -------------------------------------------------------------------

def test_dropout_rate_zero_identity():
    x = rng().random((10, 10))
    for training in (True, False):
        y, _ = ops.dropout(x, 0.0, rng(), training=training)
        np.testing.assert_array_equal(y, x)


def test_dropout_inference_identity():
    x = rng().random((10, 10))
    y, _ = ops.dropout(x, 0.5, rng(), training=False)
    np.testing.assert_array_equal(y, x)


def test_dropout_montecarlo_rate_and_mean():
    x = rng(6).random(100_000) + 0.5
    y, _ = ops.dropout(x, 0.5, rng(7), training=True)
    zero_frac = float((y == 0).mean())
    assert 0.49 <= zero_frac <= 0.51
    assert abs(y.mean() - x.mean()) / x.mean() < 0.02


# --- losses ---------------------------------------------------------------------

def test_mse_identity_case():
    x = rng().random((3, 3))
    res = mse_loss(x, x.copy())
    assert res.value == 0
    assert np.all(res.gradient == 0)


def test_mse_hand_case():
    res = mse_loss(np.array([1.0, 1.0]), np.array([0.0, 0.0]))
    assert res.value == 1.0
    np.testing.assert_array_equal(res.gradient, [1.0, 1.0])


def test_mse_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        mse_loss(np.zeros(3), np.zeros(4))


def test_cross_entropy_uniform_logits():
    res = cross_entropy_loss(np.zeros((1, 10)), [0])
    assert abs(res.value - np.log(10)) < 1e-9


def test_cross_entropy_confident_correct():
    logits = np.zeros((1, 4))
    logits[0, 2] = 50.0
    res = cross_entropy_loss(logits, [2])
    assert res.value < 1e-9


def test_cross_entropy_label_out_of_range():
    with pytest.raises(LabelRangeError):
        cross_entropy_loss(np.zeros((2, 3)), [0, 3])


@given(st.integers(1, 6), st.integers(2, 8), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_cross_entropy_gradient_rows_sum_zero(b, k, seed):
    r = np.random.default_rng(seed)
    res = cross_entropy_loss(r.standard_normal((b, k)), r.integers(0, k, b))
    np.testing.assert_allclose(res.gradient.sum(axis=-1), np.zeros(b), atol=1e-9)


# --- cache discipline -------------------------------------------------------------

def test_cache_consumed_once():
    y, cache = ops.dense(rng().random(4), rng().random((4, 3)), np.zeros(3))
    ops.backward(cache, np.ones(3))
    with pytest.raises(CacheError):
        ops.backward(cache, np.ones(3))


def test_backward_requires_cache():
    with pytest.raises(CacheError):
        ops.backward({"kind": "dense"}, np.ones(3))


def test_relu_backward_definition():
    _, cache = ops.activation(np.array([-1.0, 2.0]), "relu")
    dx, _ = ops.backward(cache, np.array([5.0, 5.0]))
    assert dx.tolist() == [0.0, 5.0]


def test_dense_backward_zero_upstream():
    x, w = rng().random(4), rng().random((4, 3))
    _, cache = ops.dense(x, w, np.zeros(3))
    dx, pg = ops.backward(cache, np.zeros(3))
    assert np.all(dx == 0) and np.all(pg["w"] == 0) and np.all(pg["b"] == 0)


# --- glorot init -------------------------------------------------------------------

def test_glorot_dense_bound():
    limit = glorot_limit((128, 64))
    assert abs(limit - np.sqrt(6 / 192)) < 1e-12
    w = glorot_uniform((128, 64), rng(8))
    assert np.all(np.abs(w) <= limit)


def test_glorot_deterministic_for_seed():
    a = glorot_uniform((40, 30), rng(9))
    b = glorot_uniform((40, 30), rng(9))
    assert a.tobytes() == b.tobytes()


def test_glorot_sample_mean_near_zero():
    w = glorot_uniform((100_000,), rng(10), dtype=np.float64)
    limit = glorot_limit((100_000,))
    stderr = limit / np.sqrt(3 * 100_000)
    assert abs(w.mean()) < 3 * stderr


def test_glorot_conv_fans():
    # conv fan_in = K*K*C, fan_out = K*K*F
    limit = glorot_limit((3, 3, 4, 8))
    assert abs(limit - np.sqrt(6 / (36 + 72))) < 1e-12
