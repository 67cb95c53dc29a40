"""Tests for the tensor node and reverse-mode backward."""
import numpy as np
import pytest

from autograd import Tensor, backward, constant, is_grad_enabled, no_grad, ops
from errors import BackwardError, ShapeError


def test_integer_data_becomes_float64():
    """Non-float input is stored as float64."""
    t = Tensor([1, 2, 3])
    assert t.dtype == np.float64
    assert Tensor(np.zeros(2, dtype=np.float32)).dtype == np.float32


def test_square_sum_gradient():
    """d/da sum(a*a) == 2a."""
    a = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    ops.sum_reduce(ops.mul(a, a)).backward()
    np.testing.assert_array_equal(a.grad, [2.0, -4.0, 6.0])


def test_shared_node_accumulates():
    """A node used twice receives both contributions."""
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = ops.mul(a, a)
    ops.sum_reduce(ops.add(b, b)).backward()
    np.testing.assert_array_equal(a.grad, [4.0, 8.0])


def test_leaf_grad_accumulates_across_graphs():
    """Two backward passes over fresh graphs add into .grad."""
    a = Tensor([3.0], requires_grad=True)
    ops.sum_reduce(ops.scale(a, 2.0)).backward()
    ops.sum_reduce(ops.scale(a, 5.0)).backward()
    np.testing.assert_array_equal(a.grad, [7.0])


def test_backward_twice_raises():
    """A consumed graph cannot be walked again."""
    a = Tensor([1.0, 2.0], requires_grad=True)
    loss = ops.sum_reduce(ops.mul(a, a))
    loss.backward()
    with pytest.raises(BackwardError):
        loss.backward()


def test_backward_through_consumed_subgraph_raises():
    """Reusing an intermediate after its graph was consumed is an error."""
    a = Tensor([1.0, 2.0], requires_grad=True)
    hidden = ops.mul(a, a)
    ops.sum_reduce(hidden).backward()
    with pytest.raises(BackwardError):
        ops.sum_reduce(ops.scale(hidden, 2.0)).backward()


def test_non_scalar_backward_raises():
    """backward() needs a single-element loss."""
    a = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(BackwardError):
        ops.mul(a, a).backward()


def test_constants_get_no_gradient():
    """Inputs wrapped with constant() never receive .grad."""
    a = Tensor([1.0, 2.0], requires_grad=True)
    c = constant([3.0, 4.0])
    ops.sum_reduce(ops.mul(a, c)).backward()
    np.testing.assert_array_equal(a.grad, [3.0, 4.0])
    assert c.grad is None


def test_functional_backward_zero_fills_unreached():
    """Parameters the loss does not touch come back as zeros."""
    a = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor(np.ones((2, 2)), requires_grad=True)
    grads = backward(ops.sum_reduce(a), [a, unused])
    np.testing.assert_array_equal(grads[0], [1.0, 1.0])
    np.testing.assert_array_equal(grads[1], np.zeros((2, 2)))


def test_no_grad_builds_no_graph():
    """Inside no_grad results are plain constants."""
    a = Tensor([1.0], requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        out = ops.mul(a, a)
    assert is_grad_enabled()
    assert not out.requires_grad
    assert out.is_leaf


def test_operator_overloads():
    """+, -, *, / and @ route to the op catalog."""
    a = Tensor([[1.0, 2.0]], requires_grad=True)
    b = Tensor([[3.0], [4.0]], requires_grad=True)
    out = (a @ b) * 2.0 - constant([[1.0]])
    assert out.item() == 21.0
    out.backward()
    np.testing.assert_array_equal(a.grad, [[6.0, 8.0]])
    np.testing.assert_array_equal(b.grad, [[2.0], [4.0]])
    np.testing.assert_array_equal((-(a / 2.0)).data, [[-0.5, -1.0]])


def test_item_requires_single_element():
    """item() on a vector is rejected."""
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0]).item()
