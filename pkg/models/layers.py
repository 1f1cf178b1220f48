"""
Parameter containers and the building blocks shared by both branches and the
fusion heads: multi-head attention, MLP, layer norm, conv blocks.
"""

import math
from dataclasses import dataclass, fields
from typing import Iterator, List, Optional, Tuple

import numpy as np

from numerics.functional import conv1d, gelu, layer_norm, matmul, softmax_rows
from numerics.tensor import Tensor
from utils.errors import DimensionError


@dataclass
class ParamGroup:
    """Dataclass whose Tensor / ParamGroup / list fields form a named parameter tree."""

    def named_tensors(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for f in fields(self):
            value = getattr(self, f.name)
            name = f"{prefix}{f.name}"
            if value is None:
                continue
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, ParamGroup):
                yield from value.named_tensors(name + ".")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    yield from item.named_tensors(f"{name}.{i}.")


@dataclass
class LayerNormParams(ParamGroup):
    gain: Tensor
    bias: Tensor


@dataclass
class AttentionParams(ParamGroup):
    wq: Tensor
    wk: Tensor
    wv: Optional[Tensor] = None


@dataclass
class MLPParams(ParamGroup):
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class ConvBlockParams(ParamGroup):
    kernel: Tensor
    bias: Tensor


class Initializer:
    """Seeded parameter factory: scaled-uniform weights, N(0, std^2) tokens."""

    def __init__(self, rng: np.random.Generator, std: float = 0.02):
        self.rng = rng
        self.std = std

    def _param(self, values: np.ndarray) -> Tensor:
        return Tensor(values, requires_grad=True)

    def linear(self, fan_in: int, fan_out: int) -> Tensor:
        bound = 1.0 / math.sqrt(fan_in)
        return self._param(self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def conv(self, c_out: int, c_in: int, *kernel: int) -> Tensor:
        bound = 1.0 / math.sqrt(c_in * int(np.prod(kernel)))
        return self._param(self.rng.uniform(-bound, bound, size=(c_out, c_in) + tuple(kernel)))

    def normal(self, *shape: int) -> Tensor:
        return self._param(self.rng.normal(0.0, self.std, size=shape))

    def zeros(self, *shape: int) -> Tensor:
        return self._param(np.zeros(shape))

    def ones(self, *shape: int) -> Tensor:
        return self._param(np.ones(shape))

    def layer_norm(self, dim: int) -> LayerNormParams:
        return LayerNormParams(gain=self.ones(dim), bias=self.zeros(dim))

    def attention(self, dim: int, with_values: bool = True) -> AttentionParams:
        return AttentionParams(
            wq=self.linear(dim, dim),
            wk=self.linear(dim, dim),
            wv=self.linear(dim, dim) if with_values else None,
        )

    def mlp(self, dim: int, hidden: int) -> MLPParams:
        return MLPParams(
            w1=self.linear(dim, hidden), b1=self.zeros(hidden),
            w2=self.linear(hidden, dim), b2=self.zeros(dim),
        )

    def conv_block(self, dim: int, kernel: int) -> ConvBlockParams:
        return ConvBlockParams(kernel=self.conv(dim, dim, kernel), bias=self.zeros(dim))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def mlp(x: Tensor, params: MLPParams) -> Tensor:
    return linear(gelu(linear(x, params.w1, params.b1)), params.w2, params.b2)


def norm(x: Tensor, params: LayerNormParams, eps: float) -> Tensor:
    return layer_norm(x, params.gain, params.bias, eps)


def attention_weights(
    q_src: Tensor, k_src: Tensor, wq: Tensor, wk: Tensor, num_heads: int
) -> Tensor:
    """Row-stochastic [heads, n_q, n_k] weights softmax(QK^T / sqrt(d))."""
    n_q, dim = q_src.shape
    n_k = k_src.shape[0]
    if k_src.shape[1] != dim:
        raise DimensionError(f"query width {dim} differs from key width {k_src.shape[1]}")
    if dim % num_heads != 0:
        raise DimensionError(f"width {dim} not divisible by {num_heads} heads")
    d = dim // num_heads
    q = matmul(q_src, wq).reshape(n_q, num_heads, d).transpose(1, 0, 2)
    k = matmul(k_src, wk).reshape(n_k, num_heads, d).transpose(1, 0, 2)
    return softmax_rows(matmul(q, k.transpose(0, 2, 1)) / math.sqrt(d))


def multi_head_attention(
    q_src: Tensor,
    kv_src: Tensor,
    params: AttentionParams,
    num_heads: int,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """
    softmax(Q K^T / sqrt(d)) V per head with Q = q_src Wq, K = kv_src Wk,
    V = kv_src Wv; heads are concatenated back to the full width.
    """
    weights = attention_weights(q_src, kv_src, params.wq, params.wk, num_heads)
    if trace is not None:
        trace.append(weights.data)
    n_q, dim = q_src.shape
    n_k = kv_src.shape[0]
    d = dim // num_heads
    v = matmul(kv_src, params.wv).reshape(n_k, num_heads, d).transpose(1, 0, 2)
    return matmul(weights, v).transpose(1, 0, 2).reshape(n_q, dim)


def conv_block(x: Tensor, params: ConvBlockParams) -> Tensor:
    """Same-length conv1d over the token axis of x[n, D], plus bias and GELU."""
    kernel = params.kernel.shape[-1]
    y = conv1d(x.T, params.kernel, stride=1, padding=kernel // 2)
    y = y + params.bias.reshape(params.bias.shape[0], 1)
    return gelu(y).T


def conv_stack(x: Tensor, blocks: List[ConvBlockParams]) -> Tensor:
    for block in blocks:
        x = conv_block(x, block)
    return x
