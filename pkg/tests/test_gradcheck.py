"""Finite-difference gradient verification of every differentiable primitive."""

import numpy as np
import pytest

from deltascope.engine import (
    BatchNormState,
    Tensor,
    batch_norm,
    concat_channels,
    conv2d,
    dense,
    dropout,
    grad_check,
    max_pool2d,
    relu,
    sigmoid,
    softmax_channels,
    transpose_conv2d,
)
from deltascope.errors import UsageError

TOL = 1e-3


def _leaf(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_linear_graph_is_exact():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    result = grad_check(lambda t: (t * 4.0).sum(), [x])
    assert result.max_rel_error < 1e-8
    assert not result.excluded


@pytest.mark.parametrize("shape", [(1, 4, 4, 2), (2, 6, 4, 1), (1, 8, 6, 3)])
def test_conv2d_gradients(shape):
    rng = np.random.default_rng(hash(shape) % 2 ** 32)
    x = _leaf(rng, shape)
    k = _leaf(rng, (3, 3, shape[3], 2))
    b = _leaf(rng, (2,))
    result = grad_check(lambda *ts: conv2d(*ts).sum(), [x, k, b])
    assert result.max_rel_error < TOL


def test_conv2d_valid_padding_stride2_gradients():
    rng = np.random.default_rng(41)
    x = _leaf(rng, (1, 6, 6, 2))
    k = _leaf(rng, (3, 3, 2, 2))
    b = _leaf(rng, (2,))
    result = grad_check(lambda *ts: conv2d(*ts, stride=2, padding="valid").sum(), [x, k, b])
    assert result.max_rel_error < TOL


@pytest.mark.parametrize("shape", [(1, 4, 4, 2), (1, 2, 3, 1), (2, 3, 3, 2)])
def test_transpose_conv2d_gradients(shape):
    rng = np.random.default_rng(7)
    x = _leaf(rng, shape)
    k = _leaf(rng, (2, 2, shape[3], 3))
    b = _leaf(rng, (3,))
    result = grad_check(lambda *ts: transpose_conv2d(*ts).sum(), [x, k, b])
    assert result.max_rel_error < TOL


@pytest.mark.parametrize("shape", [(1, 4, 4, 2), (2, 6, 8, 1), (1, 2, 2, 3)])
def test_max_pool2d_gradients(shape):
    rng = np.random.default_rng(13)
    x = _leaf(rng, shape)
    # weights make the downstream loss non-symmetric in the pooled values
    w = rng.normal(size=(shape[0], shape[1] // 2, shape[2] // 2, shape[3]))
    result = grad_check(lambda t: (max_pool2d(t) * Tensor(w)).sum(), [x])
    assert result.max_rel_error < TOL


@pytest.mark.parametrize("mode", ["train", "infer"])
@pytest.mark.parametrize("shape", [(2, 4, 4, 3), (4, 3, 2, 2), (8, 5)])
def test_batch_norm_gradients(mode, shape):
    rng = np.random.default_rng(29)
    channels = shape[-1]
    x = _leaf(rng, shape)
    gamma = Tensor(rng.uniform(0.5, 1.5, channels), requires_grad=True)
    beta = Tensor(rng.normal(size=channels), requires_grad=True)
    state = BatchNormState(rng.normal(size=channels), rng.uniform(0.5, 2.0, channels),
                           n_updates=1)
    w = rng.normal(size=shape)

    def build(xt, gt, bt):
        return (batch_norm(xt, gt, bt, state, mode) * Tensor(w)).sum()

    result = grad_check(build, [x, gamma, beta])
    assert result.max_rel_error < TOL


@pytest.mark.parametrize("shape", [(2, 3), (1, 5), (4, 4)])
def test_dense_gradients(shape):
    rng = np.random.default_rng(31)
    x = _leaf(rng, shape)
    w = _leaf(rng, (shape[1], 3))
    b = _leaf(rng, (3,))
    result = grad_check(lambda *ts: dense(*ts).sum(), [x, w, b])
    assert result.max_rel_error < TOL


@pytest.mark.parametrize("shape", [(5,), (2, 3, 4), (1, 4, 4, 2)])
def test_relu_and_sigmoid_gradients(shape):
    rng = np.random.default_rng(37)
    x = _leaf(rng, shape)
    w = rng.normal(size=shape)
    for act in (relu, sigmoid):
        result = grad_check(lambda t: (act(t) * Tensor(w)).sum(), [x])
        assert result.max_rel_error < TOL


@pytest.mark.parametrize("shape", [(1, 2, 2, 2), (2, 3, 3, 4), (3, 5)])
def test_softmax_gradients(shape):
    rng = np.random.default_rng(43)
    x = _leaf(rng, shape)
    w = rng.normal(size=shape)
    result = grad_check(lambda t: (softmax_channels(t) * Tensor(w)).sum(), [x])
    assert result.max_rel_error < TOL


def test_dropout_train_gradients_with_fixed_seed():
    rng = np.random.default_rng(47)
    x = _leaf(rng, (2, 4, 4, 2))

    def build(t):
        return dropout(t, 0.3, "train", np.random.default_rng(99)).sum()

    result = grad_check(build, [x])
    assert result.max_rel_error < TOL


def test_dropout_with_shared_generator_detected_as_nondeterministic():
    x = Tensor(np.arange(1.0, 17.0).reshape(4, 4), requires_grad=True)
    shared = np.random.default_rng(0)
    with pytest.raises(UsageError, match="deterministic"):
        grad_check(lambda t: dropout(t, 0.5, "train", shared).sum(), [x])


def test_concat_gradients():
    rng = np.random.default_rng(53)
    a = _leaf(rng, (1, 3, 3, 2))
    b = _leaf(rng, (1, 3, 3, 1))
    w = rng.normal(size=(1, 3, 3, 3))
    result = grad_check(lambda ta, tb: (concat_channels(ta, tb) * Tensor(w)).sum(), [a, b])
    assert result.max_rel_error < TOL


def test_relu_at_exact_zero_is_excluded_not_failed():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    result = grad_check(lambda t: relu(t).sum(), [x])
    assert (0, 1) in result.excluded
    assert result.n_checked == 2
    assert result.max_rel_error < 1e-8


def test_composite_conv_relu_sum_graph():
    rng = np.random.default_rng(59)
    x = _leaf(rng, (1, 5, 5, 2))
    k = _leaf(rng, (3, 3, 2, 3))
    b = _leaf(rng, (3,))
    result = grad_check(lambda *ts: relu(conv2d(*ts)).sum(), [x, k, b])
    assert result.max_rel_error < TOL
