"""Autodiff core: graph construction, backward sweep, accumulation."""

import numpy as np
import pytest

from deltascope.engine import Tensor
from deltascope.errors import DimensionError, UsageError


def test_sum_gradient_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_square_sum_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x ** 2).sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_backward_twice_accumulates_exactly_double():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    once = x.grad.copy()
    loss.backward()
    np.testing.assert_array_equal(x.grad, 2.0 * once)


def test_zero_grad_resets_accumulation():
    x = Tensor([3.0], requires_grad=True)
    loss = (x ** 2).sum()
    loss.backward()
    x.zero_grad()
    loss.backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_diamond_graph_accumulates_both_paths():
    x = Tensor([2.0], requires_grad=True)
    y = x * 3.0
    loss = (y + x).sum()  # d/dx = 3 + 1
    loss.backward()
    np.testing.assert_allclose(x.grad, [4.0])


def test_non_scalar_backward_rejected():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(UsageError):
        (x * 2.0).backward()


def test_elementwise_shape_mismatch_rejected():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((3, 2)))
    with pytest.raises(DimensionError):
        a + b
    with pytest.raises(DimensionError):
        a * b


def test_mul_product_rule():
    a = Tensor([2.0, -1.0], requires_grad=True)
    b = Tensor([5.0, 4.0], requires_grad=True)
    (a * b).sum().backward()
    np.testing.assert_allclose(a.grad, [5.0, 4.0])
    np.testing.assert_allclose(b.grad, [2.0, -1.0])


def test_mean_and_reshape_roundtrip_gradient():
    x = Tensor(np.arange(8.0), requires_grad=True)
    x.reshape(2, 4).mean().backward()
    np.testing.assert_allclose(x.grad, np.full(8, 1.0 / 8.0))


def test_gradient_only_on_requires_grad_leaves():
    x = Tensor([1.0], requires_grad=True)
    frozen = Tensor([2.0])
    (x * frozen).sum().backward()
    assert frozen.grad is None
    np.testing.assert_allclose(x.grad, [2.0])
