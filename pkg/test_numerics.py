#!/usr/bin/env python3
"""
Tests for the tensor engine and the differentiable operations.
Runs under pytest, or directly as a script.
"""

import math

import numpy as np
import pytest

from numerics import functional as F
from numerics.tensor import ComputationTape, Tensor, backward, no_grad
from utils.errors import ArgumentError, ContractError, DimensionError, NumericError
from verification.invariants import check_op_gradients, check_softmax_rows


def test_matmul_shapes():
    """Products, batched products and the shape checks"""
    a = Tensor(np.arange(6.0).reshape(2, 3))
    b = Tensor(np.eye(3))
    np.testing.assert_array_equal(F.matmul(a, b).data, a.data)

    with pytest.raises(DimensionError):
        F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(DimensionError):
        F.matmul(Tensor(np.ones((2, 2, 3))), Tensor(np.ones((3, 3, 2))))
    with pytest.raises(DimensionError):
        F.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


def test_small_products():
    np.testing.assert_array_equal(F.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]])).data,
                                  [[3.0], [7.0]])
    np.testing.assert_allclose(F.softmax_rows(Tensor([[0.0, math.log(2.0), math.log(3.0)]])).data,
                               [[1 / 6, 2 / 6, 3 / 6]], atol=1e-15)
    x = np.random.default_rng(2).normal(size=(3, 4))
    np.testing.assert_allclose(F.softmax_rows(Tensor(x + 7.5)).data, F.softmax_rows(Tensor(x)).data, atol=1e-12)


def test_softmax_rows():
    y = F.softmax_rows(Tensor([[0.0, 0.0, 0.0, 0.0], [1000.0, 0.0, -1000.0, 0.0]])).data
    np.testing.assert_allclose(y[0], 0.25, atol=1e-15)
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)
    assert y[1, 0] == pytest.approx(1.0)
    assert check_softmax_rows()


def test_layer_norm():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(loc=3.0, scale=5.0, size=(4, 6)))
    y = F.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)), eps=1e-12).data
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-9)

    ones, zeros = Tensor(np.ones(2)), Tensor(np.zeros(2))
    np.testing.assert_array_equal(F.layer_norm(Tensor([[4.0, 4.0]]), ones, zeros).data, [[0.0, 0.0]])
    np.testing.assert_allclose(F.layer_norm(Tensor([[1.0, 3.0]]), ones, zeros, eps=1e-14).data, [[-1.0, 1.0]])
    np.testing.assert_array_equal(
        F.layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.zeros(2)), Tensor([0.5, -0.5])).data, [[0.5, -0.5]]
    )

    with pytest.raises(DimensionError):
        F.layer_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(6)))


def test_conv1d_is_cross_correlation():
    x = Tensor([[1.0, 2.0, 3.0, 4.0]])
    k = Tensor([[[1.0, 0.0, -1.0]]])
    np.testing.assert_array_equal(F.conv1d(x, k).data, [[-2.0, -2.0]])
    # zero padding on both ends
    np.testing.assert_array_equal(F.conv1d(x, k, padding=1).data, [[-2.0, -2.0, -2.0, 3.0]])

    np.testing.assert_array_equal(F.conv1d(x, Tensor([[[1.0, 1.0]]]), stride=2).data, [[3.0, 7.0]])

    for T in range(1, 9):
        for K in range(1, 9):
            for s in range(1, 9):
                for p in range(0, 3):
                    if T + 2 * p < K:
                        continue
                    out = F.conv1d(Tensor(np.ones((1, T))), Tensor(np.ones((1, 1, K))), stride=s, padding=p)
                    placements = len(range(0, T + 2 * p - K + 1, s))
                    assert out.shape == (1, placements) == (1, (T + 2 * p - K) // s + 1)

    with pytest.raises(DimensionError):
        F.conv1d(Tensor(np.ones((2, 5))), Tensor(np.ones((1, 3, 3))))
    with pytest.raises(DimensionError):
        F.conv1d(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 1, 3))))
    with pytest.raises(ArgumentError):
        F.conv1d(x, k, stride=0)


def test_conv2d_patches_grid():
    x = Tensor(np.arange(12.0).reshape(1, 3, 4))
    kernels = Tensor(np.ones((2, 1, 2, 2)))
    out = F.conv2d_patches(x, kernels, (1, 2))
    assert out.shape == (2, 2, 2)
    # top-left patch covers 0, 1, 4, 5
    assert out.data[0, 0, 0] == 10.0

    big = F.conv2d_patches(Tensor(np.zeros((1, 128, 100))), Tensor(np.zeros((1, 1, 16, 16))), (10, 10))
    assert big.shape == (1, 12, 9)
    with pytest.raises(DimensionError):
        F.conv2d_patches(Tensor(np.ones((1, 1, 4))), kernels, (1, 1))


def test_adaptive_pooling_bins():
    np.testing.assert_allclose(F.adaptive_avg_pool(Tensor([[1.0, 2.0, 3.0, 4.0]]), 2).data, [[1.5, 3.5]])
    # overlapping bins [0, 2) and [1, 3)
    np.testing.assert_allclose(F.adaptive_avg_pool(Tensor([[1.0, 2.0, 3.0]]), 2).data, [[1.5, 2.5]])
    # upsampling repeats values
    np.testing.assert_allclose(F.adaptive_avg_pool(Tensor([[1.0, 3.0]]), 4).data, [[1.0, 1.0, 3.0, 3.0]])
    for length in (1, 3, 7, 32):
        P = F.pooling_matrix(length, 5)
        np.testing.assert_allclose(P.sum(axis=0), 1.0)
    with pytest.raises(ArgumentError):
        F.adaptive_avg_pool(Tensor([[1.0, 2.0]]), 0)


def test_bilinear_resize():
    mid = F.bilinear_resize2d(Tensor([[[0.0, 2.0]]]), (1, 3)).data
    np.testing.assert_array_equal(mid, [[[0.0, 1.0, 2.0]]])

    base = np.random.default_rng(1).normal(size=(3, 4, 6))
    same = F.bilinear_resize2d(Tensor(base), (4, 6)).data
    assert np.max(np.abs(same - base)) <= 1e-12

    big = F.bilinear_resize2d(Tensor(base), (9, 11)).data
    for corner in ((0, 0), (0, -1), (-1, 0), (-1, -1)):
        np.testing.assert_allclose(big[:, corner[0], corner[1]], base[:, corner[0], corner[1]], atol=1e-12)


def test_cross_entropy_value_and_gradient():
    logits = Tensor([0.0, 0.0], requires_grad=True)
    loss = F.cross_entropy(logits, 0)
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-15)
    backward(loss)
    np.testing.assert_allclose(logits.grad, [-0.5, 0.5], atol=1e-15)

    with pytest.raises(DimensionError):
        F.cross_entropy(Tensor([0.0, 1.0]), 2)


def test_gelu_reference_points():
    y = F.gelu(Tensor([0.0, 1.0, -1.0])).data
    assert y[0] == 0.0
    assert y[1] == pytest.approx(0.841192, abs=1e-6)
    assert y[2] == pytest.approx(-0.158808, abs=1e-6)


def test_normalize_weights():
    np.testing.assert_allclose(F.normalize_weights(Tensor([1.0, 3.0])).data, [0.25, 0.75])
    with pytest.raises(ArgumentError):
        F.normalize_weights(Tensor([0.0, 0.0]))


def test_gradients_accumulate_over_reused_nodes():
    """y = x*x + x reads x twice, so dy/dx = 2x + 1"""
    x = Tensor([1.5, -2.0, 0.25], requires_grad=True)
    y = (x * x + x).sum()
    backward(y)
    np.testing.assert_allclose(x.grad, 2 * x.data + 1.0, atol=1e-15)


def test_tape_orders_by_creation():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = (x * 2.0 + x).sum()
    tape = ComputationTape(y)
    assert len(tape) >= 3


def test_backward_examples():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    unused = Tensor([5.0], requires_grad=True)
    backward((x * x).sum())
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])
    np.testing.assert_array_equal(unused.grad, [0.0])

    x.zero_grad()
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    x.zero_grad()
    backward(x.detach().sum())
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 0.0])


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)


def test_non_finite_values_are_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with np.errstate(over="ignore"):
        with pytest.raises(NumericError):
            Tensor([1e308]) * 10.0


def test_no_grad_stops_recording():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = x * 3.0
    assert not y.requires_grad
    assert (x * 3.0).requires_grad


def test_primitive_gradients_match_finite_differences():
    """Every primitive against central differences over 20 seeds"""
    assert "max relative error" in check_op_gradients()


if __name__ == "__main__":
    print("🧪 Testing the tensor engine")
    print("=" * 60)
    raise SystemExit(pytest.main([__file__, "-q"]))
