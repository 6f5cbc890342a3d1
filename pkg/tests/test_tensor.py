from __future__ import annotations

import numpy as np
import pytest

from vadkit.tensor import Tensor, backward, concat, no_grad, grad_enabled


def test_broadcast_add_reduces_gradient_to_operand_shape():
    a = Tensor(np.ones((2, 3)), requires_grad=True, dtype=np.float64)
    b = Tensor(np.ones(3), requires_grad=True, dtype=np.float64)
    backward((a + b).sum())
    assert a.grad.shape == (2, 3)
    np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])


def test_reused_node_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True, dtype=np.float64)
    y = x * x + x
    backward(y.sum())
    np.testing.assert_allclose(x.grad, [7.0])


def test_only_leaves_keep_grad():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=np.float64)
    mid = x * 2.0
    backward(mid.sum())
    assert mid.grad is None
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        backward(x * 2.0)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        assert not grad_enabled()
        y = (x * 2.0).sum()
    assert grad_enabled()
    assert not y.requires_grad


def test_float64_graph_stays_float64():
    x = Tensor(np.ones(4), dtype=np.float64, requires_grad=True)
    assert ((x * 3.0) / 2.0).dtype == np.float64


@pytest.mark.gradient
@pytest.mark.parametrize("seed", range(20))
def test_elementwise_chain_gradients(gradcheck, seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(3, 4))
    b = r.uniform(0.5, 2.0, size=(4,))

    def build(x, y):
        z = (x * y - x / y + (x**2) * 0.5).abs()
        return concat([z, x[1:2] * 3.0], axis=0).mean() + z.sum(axis=1).mean()

    assert gradcheck(build, [a, b]) < 1e-4


def test_full_reduction_of_float64_stays_float64():
    # 0-d arithmetic yields numpy scalars; they must not fall back to float32
    x = Tensor(np.full((3, 4), 1.0 / 3.0), dtype=np.float64)
    m = x.mean()
    assert m.dtype == np.float64
    assert m.item() == pytest.approx(1.0 / 3.0, abs=1e-15)
