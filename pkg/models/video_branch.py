"""
Visual branch: temporal downsampling to a fixed length, linear patch
embedding, CLS token and positional encoding, then N self-attention blocks.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from models.layers import (
    AttentionParams,
    Initializer,
    LayerNormParams,
    MLPParams,
    ParamGroup,
    mlp,
    multi_head_attention,
    norm,
)
from models.schema import VideoFrontendConfig
from numerics.functional import adaptive_avg_pool, concat, conv1d, matmul
from numerics.tensor import Tensor, as_tensor
from utils.errors import ArgumentError, ConfigurationError, DimensionError


@dataclass
class VideoBlockParams(ParamGroup):
    attn: AttentionParams
    norm: LayerNormParams
    mlp: MLPParams


@dataclass
class VideoBranchParams(ParamGroup):
    down_kernels: Tensor  # [C, C, K]
    down_bias: Tensor  # [C]
    down_norm: LayerNormParams  # over C
    embed: Tensor  # [C, D]
    cls_token: Tensor  # [1, D]
    pos: Tensor  # [L + 1, D]
    blocks: List[VideoBlockParams]


def init_video_params(cfg: VideoFrontendConfig, init: Initializer) -> VideoBranchParams:
    C, D = cfg.input_dim, cfg.embed_dim
    return VideoBranchParams(
        down_kernels=init.conv(C, C, cfg.kernel),
        down_bias=init.zeros(C),
        down_norm=init.layer_norm(C),
        embed=init.linear(C, D),
        cls_token=init.normal(1, D),
        pos=init.normal(cfg.fixed_length + 1, D),
        blocks=[
            VideoBlockParams(
                attn=init.attention(D),
                norm=init.layer_norm(D),
                mlp=init.mlp(D, cfg.mlp_hidden),
            )
            for _ in range(cfg.num_blocks)
        ],
    )


def downsample_temporal(x: Tensor, params: VideoBranchParams, cfg: VideoFrontendConfig) -> Tensor:
    """x[T, C] -> [L, C]: conv1d over time, layer norm over features, adaptive pooling to L."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ArgumentError(f"video input must be a non-empty [T, C] matrix, got {x.shape}")
    if x.shape[1] != cfg.input_dim:
        raise DimensionError(f"video input has {x.shape[1]} features, config expects {cfg.input_dim}")
    if not cfg.downsample:
        if x.shape[0] != cfg.fixed_length:
            raise ConfigurationError(
                f"downsampling disabled but input length {x.shape[0]} != fixed length {cfg.fixed_length}"
            )
        return x

    y = conv1d(x.T, params.down_kernels, stride=cfg.stride, padding=cfg.padding)
    y = y + params.down_bias.reshape(cfg.input_dim, 1)
    y = norm(y.T, params.down_norm, cfg.ln_eps)
    return adaptive_avg_pool(y.T, cfg.fixed_length).T


def patch_embed(x: Tensor, weight: Tensor) -> Tensor:
    """Bias-free linear embedding x[L, C] @ W[C, D]."""
    return matmul(x, weight)


def prepend_cls_and_pos(xe: Tensor, params: VideoBranchParams) -> Tensor:
    """Row 0 is the CLS token, rows 1..L the embeddings; positional encoding added after."""
    expected = xe.shape[0] + 1
    if params.pos.shape[0] != expected:
        raise ConfigurationError(
            f"positional encoding has {params.pos.shape[0]} rows, token sequence has {expected}"
        )
    return concat([params.cls_token, xe], axis=0) + params.pos


def self_attention_block(
    x: Tensor,
    block: VideoBlockParams,
    num_heads: int,
    eps: float = 1e-5,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Z = MHSA(x); out = MLP(LN(Z + x)) + (Z + x)."""
    z = multi_head_attention(x, x, block.attn, num_heads, trace)
    residual = z + x
    return mlp(norm(residual, block.norm, eps), block.mlp) + residual


def video_forward(
    x: Tensor,
    params: VideoBranchParams,
    cfg: VideoFrontendConfig,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Visual representation of shape [L + 1, D] for any input length T >= 1."""
    tokens = downsample_temporal(x, params, cfg)
    tokens = prepend_cls_and_pos(patch_embed(tokens, params.embed), params)
    for block in params.blocks:
        tokens = self_attention_block(tokens, block, cfg.num_heads, cfg.ln_eps, trace)
    return tokens
