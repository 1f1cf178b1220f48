"""
Acoustic branch. A feature matrix [F, T] is projected to a fixed [1, F', T']
image, cut into overlapping patches, given interpolated positional embeddings
plus CLS and distillation tokens, and run through a post-norm encoder.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

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
from models.schema import AudioFrontendConfig
from numerics.functional import (
    adaptive_avg_pool,
    bilinear_resize2d,
    concat,
    conv1d,
    conv2d_patches,
    layer_norm,
)
from numerics.tensor import Tensor, as_tensor
from utils.errors import ArgumentError, DimensionError


@dataclass
class AudioLayerParams(ParamGroup):
    attn: AttentionParams
    norm1: LayerNormParams
    mlp: MLPParams
    norm2: LayerNormParams


@dataclass
class AudioBranchParams(ParamGroup):
    proj_kernels: Tensor  # [F', F, K]
    proj_bias: Tensor  # [F']
    proj_norm: LayerNormParams  # per projected frequency channel
    patch_kernels: Tensor  # [D, 1, p_f, p_t]
    pos_base: Tensor  # [D, h_base, w_base]
    cls_token: Tensor  # [1, D]
    dist_token: Tensor  # [1, D]
    cls_pos: Tensor  # [1, D]
    dist_pos: Tensor  # [1, D]
    layers: List[AudioLayerParams]


def init_audio_params(cfg: AudioFrontendConfig, init: Initializer) -> AudioBranchParams:
    D = cfg.embed_dim
    p_f, p_t = cfg.patch
    h_base, w_base = cfg.base_grid
    return AudioBranchParams(
        proj_kernels=init.conv(cfg.target_freq, cfg.input_freq, cfg.conv_kernel),
        proj_bias=init.zeros(cfg.target_freq),
        proj_norm=init.layer_norm(cfg.target_freq),
        patch_kernels=init.conv(D, 1, p_f, p_t),
        pos_base=init.normal(D, h_base, w_base),
        cls_token=init.normal(1, D),
        dist_token=init.normal(1, D),
        cls_pos=init.normal(1, D),
        dist_pos=init.normal(1, D),
        layers=[
            AudioLayerParams(
                attn=init.attention(D),
                norm1=init.layer_norm(D),
                mlp=init.mlp(D, cfg.mlp_hidden),
                norm2=init.layer_norm(D),
            )
            for _ in range(cfg.num_layers)
        ],
    )


def channel_norm(x: Tensor, params: LayerNormParams, eps: float) -> Tensor:
    """Per-sample normalization of each row of x[C, T] over time, then a per-channel affine map."""
    C, T = x.shape
    unit = layer_norm(x, Tensor(np.ones(T)), Tensor(np.zeros(T)), eps)
    return unit * params.gain.reshape(C, 1) + params.bias.reshape(C, 1)


def time_freq_project(xf: Tensor, params: AudioBranchParams, cfg: AudioFrontendConfig) -> Tensor:
    """[F, T] -> [1, F', T']: conv1d over frequency channels, normalization, pooling over time."""
    xf = as_tensor(xf)
    if xf.ndim != 2 or xf.shape[0] < 1 or xf.shape[1] < 1:
        raise ArgumentError(f"audio input must be a non-empty [F, T] matrix, got {xf.shape}")
    if xf.shape[0] != cfg.input_freq:
        raise DimensionError(f"audio input has {xf.shape[0]} features, config expects {cfg.input_freq}")

    y = conv1d(xf, params.proj_kernels, stride=1, padding=cfg.conv_kernel // 2)
    y = y + params.proj_bias.reshape(cfg.target_freq, 1)
    if cfg.norm_kind == "channel":
        y = channel_norm(y, params.proj_norm, cfg.ln_eps)
    y = adaptive_avg_pool(y, cfg.target_time)
    return y.reshape(1, cfg.target_freq, cfg.target_time)


def patchify(x: Tensor, params: AudioBranchParams, cfg: AudioFrontendConfig) -> Tensor:
    """Overlapping patch embedding, grid flattened row-major: [1, F', T'] -> [M, D]."""
    grid = conv2d_patches(x, params.patch_kernels, cfg.stride)
    D, h, w = grid.shape
    return grid.reshape(D, h * w).T


def interp_pos_embed(base: Tensor, target: Tuple[int, int]) -> Tensor:
    """Bilinear resize of the base grid to (h, w), flattened to [M, D] in patch order."""
    h, w = target
    resized = bilinear_resize2d(base, (h, w))
    return resized.reshape(base.shape[0], h * w).T


def assemble_sequence(xp: Tensor, xe: Tensor, params: AudioBranchParams) -> Tensor:
    """[x_cls + e_cls; x_dist + e_dist; xp + xe] -> [M + 2, D]."""
    if xp.shape != xe.shape:
        raise DimensionError(f"patch embeddings {xp.shape} and positions {xe.shape} differ")
    if xp.shape[1] != params.cls_token.shape[1]:
        raise DimensionError(f"patch width {xp.shape[1]} differs from token width {params.cls_token.shape[1]}")
    return concat(
        [params.cls_token + params.cls_pos, params.dist_token + params.dist_pos, xp + xe], axis=0
    )


def encoder_layer(
    x: Tensor,
    layer: AudioLayerParams,
    num_heads: int,
    eps: float = 1e-5,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Post-norm layer: U = LN(X + MHSA(X)); Z = LN(U + MLP(U))."""
    u = norm(x + multi_head_attention(x, x, layer.attn, num_heads, trace), layer.norm1, eps)
    return norm(u + mlp(u, layer.mlp), layer.norm2, eps)


def audio_forward(
    xf: Tensor,
    params: AudioBranchParams,
    cfg: AudioFrontendConfig,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Acoustic representation of shape [M + 2, D]."""
    image = time_freq_project(xf, params, cfg)
    patches = patchify(image, params, cfg)
    positions = interp_pos_embed(params.pos_base, cfg.grid)
    tokens = assemble_sequence(patches, positions, params)
    for layer in params.layers:
        tokens = encoder_layer(tokens, layer, cfg.num_heads, cfg.ln_eps, trace)
    return tokens
