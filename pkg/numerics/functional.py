"""
Differentiable operations over ``Tensor``.

Conventions: convolutions are cross-correlations (no kernel flip), bilinear
resizing uses the align-corners grid, adaptive pooling bins are
``[floor(i*T/n), ceil((i+1)*T/n))``.
"""

import math
from typing import Sequence, Tuple

import numpy as np

from numerics.tensor import Tensor, as_tensor
from utils.errors import ArgumentError, DimensionError

_GELU_C = math.sqrt(2.0 / math.pi)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must agree exactly."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch dimensions differ: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def rule(g):
        return g @ np.swapaxes(B, -1, -2), np.swapaxes(A, -1, -2) @ g

    return Tensor._from_op(A @ B, (a, b), rule, "matmul")


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(y, (x,), rule, "softmax_rows")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalizes the last axis to zero mean / unit variance, then applies gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    D = x.shape[-1]
    if gain.shape != (D,) or bias.shape != (D,):
        raise DimensionError(
            f"layer_norm over last dim {D} got gain {gain.shape} and bias {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    G = gain.data

    def rule(g):
        dxhat = g * G
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._from_op(xhat * G + bias.data, (x, gain, bias), rule, "layer_norm")


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    u = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(u)

    def rule(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * v ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * du),)

    return Tensor._from_op(0.5 * v * (1.0 + t), (x,), rule, "gelu")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ArgumentError("concat needs at least one tensor")
    try:
        values = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"cannot concatenate {[t.shape for t in tensors]}: {e}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(values, tensors, rule, "concat")


def outer(a: Tensor, b: Tensor) -> Tensor:
    """Outer product of two vectors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionError(f"outer needs vectors, got {a.shape} and {b.shape}")
    return a.reshape(a.shape[0], 1) * b.reshape(1, b.shape[0])


def conv1d(x: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlation of x[C_in, T] with kernels[C_out, C_in, K].

    Output length is floor((T + 2*padding - K) / stride) + 1.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 2 or kernels.ndim != 3:
        raise DimensionError(f"conv1d needs x[C,T] and kernels[O,C,K], got {x.shape}, {kernels.shape}")
    if stride < 1 or padding < 0:
        raise ArgumentError(f"conv1d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    c_in, T = x.shape
    c_out, k_in, K = kernels.shape
    if k_in != c_in:
        raise DimensionError(f"conv1d kernels expect {k_in} input channels, input has {c_in}")
    padded = T + 2 * padding
    if padded < K:
        raise DimensionError(f"conv1d kernel {K} larger than padded input {padded}")
    t_out = conv_output_length(T, K, stride, padding)

    xp = np.pad(x.data, ((0, 0), (padding, padding)))
    idx = stride * np.arange(t_out)[:, None] + np.arange(K)[None, :]
    cols = xp[:, idx]
    W = kernels.data

    def rule(g):
        dw = np.einsum("ot,ctk->ock", g, cols)
        dcols = np.einsum("ot,ock->ctk", g, W)
        dxp = np.zeros_like(xp)
        np.add.at(dxp, (slice(None), idx), dcols)
        return dxp[:, padding:padding + T], dw

    return Tensor._from_op(np.einsum("ctk,ock->ot", cols, W), (x, kernels), rule, "conv1d")


def conv_output_length(length: int, kernel: int, stride: int, padding: int = 0) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv2d_patches(x: Tensor, kernels: Tensor, stride: Tuple[int, int]) -> Tensor:
    """
    Single-channel 2D cross-correlation: x[1, F, T], kernels[D, 1, p_f, p_t] -> [D, h, w]
    with h = floor((F - p_f)/s_f) + 1 and w = floor((T - p_t)/s_t) + 1.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 3 or x.shape[0] != 1:
        raise DimensionError(f"conv2d_patches needs x[1,F,T], got {x.shape}")
    if kernels.ndim != 4 or kernels.shape[1] != 1:
        raise DimensionError(f"conv2d_patches needs kernels[D,1,pf,pt], got {kernels.shape}")
    s_f, s_t = stride
    if s_f < 1 or s_t < 1:
        raise ArgumentError(f"patch strides must be >= 1, got {stride}")
    _, F, T = x.shape
    _, _, p_f, p_t = kernels.shape
    if F < p_f or T < p_t:
        raise DimensionError(f"patch {p_f}x{p_t} larger than input {F}x{T}")
    h = conv_output_length(F, p_f, s_f)
    w = conv_output_length(T, p_t, s_t)

    rows = s_f * np.arange(h)[:, None] + np.arange(p_f)[None, :]
    cols = s_t * np.arange(w)[:, None] + np.arange(p_t)[None, :]
    index = (rows[:, None, :, None], cols[None, :, None, :])
    patches = x.data[0][index]
    K = kernels.data[:, 0]

    def rule(g):
        dk = np.einsum("dhw,hwij->dij", g, patches)[:, None]
        dpatch = np.einsum("dhw,dij->hwij", g, K)
        dx = np.zeros((F, T))
        np.add.at(dx, index, dpatch)
        return dx[None], dk

    out = np.einsum("hwij,dij->dhw", patches, K)
    return Tensor._from_op(out, (x, kernels), rule, "conv2d_patches")


def pooling_matrix(length: int, target: int) -> np.ndarray:
    """[length, target] matrix whose column i averages adaptive-pool bin i."""
    if target < 1:
        raise ArgumentError(f"adaptive pooling target must be >= 1, got {target}")
    if length < 1:
        raise ArgumentError(f"adaptive pooling needs a non-empty input, got length {length}")
    P = np.zeros((length, target))
    for i in range(target):
        start = (i * length) // target
        end = -((-(i + 1) * length) // target)
        P[start:end, i] = 1.0 / (end - start)
    return P


def adaptive_avg_pool(x: Tensor, target: int) -> Tensor:
    """Pools x[C, T] along T into exactly ``target`` bins."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"adaptive_avg_pool needs x[C,T], got {x.shape}")
    P = pooling_matrix(x.shape[1], target)
    return Tensor._from_op(x.data @ P, (x,), lambda g: (g @ P.T,), "adaptive_avg_pool")


def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] linear interpolation weights on the align-corners grid."""
    if n_in < 1 or n_out < 1:
        raise ArgumentError(f"resize sizes must be >= 1, got {n_in} -> {n_out}")
    R = np.zeros((n_out, n_in))
    if n_in == 1:
        R[:, 0] = 1.0
        return R
    if n_out == 1:
        R[0, 0] = 1.0
        return R
    for i in range(n_out):
        src = i * (n_in - 1) / (n_out - 1)
        lo = min(int(math.floor(src)), n_in - 1)
        frac = src - lo
        R[i, lo] += 1.0 - frac
        if frac > 0.0:
            R[i, lo + 1] += frac
    return R


def bilinear_resize2d(x: Tensor, target: Tuple[int, int]) -> Tensor:
    """Resizes x[D, h0, w0] to [D, h, w]; corner values are preserved exactly."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"bilinear_resize2d needs x[D,h,w], got {x.shape}")
    h, w = target
    Rh = interpolation_matrix(x.shape[1], h)
    Rw = interpolation_matrix(x.shape[2], w)
    out = np.einsum("hi,dij,wj->dhw", Rh, x.data, Rw)

    def rule(g):
        return (np.einsum("hi,dhw,wj->dij", Rh, g, Rw),)

    return Tensor._from_op(out, (x,), rule, "bilinear_resize2d")


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Softmax cross-entropy of a logit vector against an integer class."""
    logits = as_tensor(logits)
    if logits.ndim != 1 or not 0 <= label < logits.shape[0]:
        raise DimensionError(f"cross_entropy needs a logit vector and a valid label, got {logits.shape}, {label}")
    z = logits.data
    m = z.max()
    e = np.exp(z - m)
    total = e.sum()
    loss = m + np.log(total) - z[label]
    probs = e / total

    def rule(g):
        grad = probs.copy()
        grad[label] -= 1.0
        return (g * grad,)

    return Tensor._from_op(np.asarray(loss), (logits,), rule, "cross_entropy")


def softmax_probabilities(logits: np.ndarray) -> np.ndarray:
    """Plain-array softmax for evaluation-time probabilities."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def normalize_weights(weights: Tensor) -> Tensor:
    """w / sum(w) for a non-negative weight vector with a positive total."""
    weights = as_tensor(weights)
    total = weights.data.sum()
    if not total > 0.0:
        raise ArgumentError("weights must have a positive total")
    y = weights.data / total

    def rule(g):
        return ((g - (g * y).sum()) / total,)

    return Tensor._from_op(y, (weights,), rule, "normalize_weights")
