"""
Cross-modal fusion heads.

LT, IT and IA exchange information between the branch sequences through
cross-attention; the Add / Multi / Concat / TF baselines and the unimodal
strategies work on mean-pooled branch outputs. Every path ends in
``classify_head`` with two logits.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from models.layers import (
    AttentionParams,
    ConvBlockParams,
    Initializer,
    LayerNormParams,
    MLPParams,
    ParamGroup,
    attention_weights,
    conv_stack,
    mlp,
    multi_head_attention,
    norm,
)
from models.schema import FusionStrategy
from numerics.functional import concat, matmul, normalize_weights, outer
from numerics.tensor import Tensor, as_tensor
from utils.errors import ArgumentError, ConfigurationError, DimensionError

NUM_CLASSES = 2


@dataclass
class CrossBlockParams(ParamGroup):
    attn: AttentionParams
    norm: Optional[LayerNormParams] = None
    mlp: Optional[MLPParams] = None


@dataclass
class HeadParams(ParamGroup):
    weight: Tensor  # [k, 2]
    bias: Tensor  # [2]


@dataclass
class FusionParams(ParamGroup):
    head: HeadParams
    audio_convs: List[ConvBlockParams] = field(default_factory=list)
    video_convs: List[ConvBlockParams] = field(default_factory=list)
    audio_cross: Optional[CrossBlockParams] = None  # audio queries, visual keys/values
    video_cross: Optional[CrossBlockParams] = None  # visual queries, acoustic keys/values
    audio_post: List[ConvBlockParams] = field(default_factory=list)
    video_post: List[ConvBlockParams] = field(default_factory=list)


def head_width(strategy: FusionStrategy, dim: int) -> int:
    if strategy in (FusionStrategy.ADD, FusionStrategy.MULTIPLY,
                    FusionStrategy.AUDIO_ONLY, FusionStrategy.VIDEO_ONLY):
        return dim
    if strategy is FusionStrategy.TENSOR_FUSION:
        return (dim + 1) ** 2
    return 2 * dim


def init_fusion_params(
    strategy: FusionStrategy,
    dim: int,
    mlp_hidden: int,
    init: Initializer,
    conv_layers: int = 2,
    kernel: int = 3,
) -> FusionParams:
    width = head_width(strategy, dim)
    params = FusionParams(head=HeadParams(weight=init.linear(width, NUM_CLASSES), bias=init.zeros(NUM_CLASSES)))
    if strategy is FusionStrategy.LATE_TRANSFORMER:
        params.audio_convs = [init.conv_block(dim, kernel) for _ in range(conv_layers)]
        params.video_convs = [init.conv_block(dim, kernel) for _ in range(conv_layers)]
        params.audio_cross = CrossBlockParams(init.attention(dim), init.layer_norm(dim), init.mlp(dim, mlp_hidden))
        params.video_cross = CrossBlockParams(init.attention(dim), init.layer_norm(dim), init.mlp(dim, mlp_hidden))
    elif strategy in (FusionStrategy.INTERMEDIATE_TRANSFORMER, FusionStrategy.INTERMEDIATE_ATTENTION):
        with_values = strategy is FusionStrategy.INTERMEDIATE_TRANSFORMER
        params.audio_convs = [init.conv_block(dim, kernel) for _ in range(2)]
        params.video_convs = [init.conv_block(dim, kernel) for _ in range(2)]
        # IT keeps values and normalizes its residual; IA only needs scores
        params.audio_cross = CrossBlockParams(init.attention(dim, with_values),
                                              init.layer_norm(dim) if with_values else None)
        params.video_cross = CrossBlockParams(init.attention(dim, with_values),
                                              init.layer_norm(dim) if with_values else None)
        params.audio_post = [init.conv_block(dim, kernel)]
        params.video_post = [init.conv_block(dim, kernel)]
    return params


# -- attention primitives -------------------------------------------------


def cross_attention(
    q_src: Tensor, kv_src: Tensor, params: AttentionParams, trace: Optional[List[np.ndarray]] = None
) -> Tensor:
    """O = softmax(q_src Wq Wk^T kv_src^T / sqrt(d)) kv_src Wv, a single head of width d = D."""
    if params.wv is None:
        raise ConfigurationError("cross_attention needs value weights")
    return multi_head_attention(q_src, kv_src, params, num_heads=1, trace=trace)


def attention_map(
    q_src: Tensor, k_src: Tensor, params: AttentionParams, trace: Optional[List[np.ndarray]] = None
) -> Tensor:
    """Row-stochastic [n_q, n_k] score matrix softmax(q Wq (k Wk)^T / sqrt(d)); no value projection."""
    weights = attention_weights(q_src, k_src, params.wq, params.wk, num_heads=1)
    if trace is not None:
        trace.append(weights.data)
    return weights.reshape(q_src.shape[0], k_src.shape[0])


def attention_pool(attn_map: Tensor, feats: Tensor, reduce: str = "keys") -> Tensor:
    """
    Saliency-weighted average of ``feats``.

    reduce="keys": s_j = sum_i map[i, j], the attention mass each key receives;
    ``feats`` are the key-side rows. reduce="queries": s_i = sum_j map[i, j],
    with ``feats`` the query-side rows.
    """
    attn_map, feats = as_tensor(attn_map), as_tensor(feats)
    if reduce == "keys":
        saliency = attn_map.sum(axis=0)
    elif reduce == "queries":
        saliency = attn_map.sum(axis=1)
    else:
        raise ArgumentError(f"unknown attention_pool reduction {reduce!r}")
    n = saliency.shape[0]
    if feats.ndim != 2 or feats.shape[0] != n:
        raise DimensionError(f"saliency over {n} tokens cannot pool features of shape {feats.shape}")
    weights = normalize_weights(saliency).reshape(1, n)
    return matmul(weights, feats).reshape(feats.shape[1])


def mean_pool(x: Tensor) -> Tensor:
    return x.mean(axis=0)


def classify_head(features: Tensor, params: HeadParams) -> Tensor:
    """Affine map of a feature vector to two logits."""
    features = as_tensor(features)
    width = params.weight.shape[0]
    if features.shape != (width,):
        raise ConfigurationError(f"classifier expects {width} features, got shape {features.shape}")
    return matmul(features.reshape(1, width), params.weight).reshape(NUM_CLASSES) + params.bias


def predict_label(logits: np.ndarray) -> int:
    """Argmax with ties resolved to class 0."""
    return int(np.argmax(logits))


# -- proposed fusions -----------------------------------------------------


def _cross_block(
    q_src: Tensor, kv_src: Tensor, block: CrossBlockParams, eps: float, trace: Optional[List[np.ndarray]]
) -> Tensor:
    """Cross-attention inside a transformer block: R = O + q; out = MLP(LN(R)) + R."""
    residual = cross_attention(q_src, kv_src, block.attn, trace) + q_src
    return mlp(norm(residual, block.norm, eps), block.mlp) + residual


def fuse_late_transformer(
    xv: Tensor, xa: Tensor, params: FusionParams, eps: float = 1e-5,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Conv1d stacks, then one cross-modal transformer block per direction, pool, concat, classify."""
    a = conv_stack(xa, params.audio_convs)
    v = conv_stack(xv, params.video_convs)
    a_fused = _cross_block(a, v, params.audio_cross, eps, trace)
    v_fused = _cross_block(v, a, params.video_cross, eps, trace)
    return classify_head(concat([mean_pool(a_fused), mean_pool(v_fused)]), params.head)


def fuse_intermediate_transformer(
    xv: Tensor, xa: Tensor, params: FusionParams, eps: float = 1e-5,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """
    Two conv1d layers, cross-attention both ways added to the originals and
    layer-normed, one more conv1d, pool, classify.
    """
    a = conv_stack(xa, params.audio_convs)
    v = conv_stack(xv, params.video_convs)
    a_fused = norm(cross_attention(a, v, params.audio_cross.attn, trace) + a, params.audio_cross.norm, eps)
    v_fused = norm(cross_attention(v, a, params.video_cross.attn, trace) + v, params.video_cross.norm, eps)
    a_out = conv_stack(a_fused, params.audio_post)
    v_out = conv_stack(v_fused, params.video_post)
    return classify_head(concat([mean_pool(a_out), mean_pool(v_out)]), params.head)


def fuse_intermediate_attention(
    xv: Tensor, xa: Tensor, params: FusionParams, reduce: str = "keys",
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """
    Two conv1d layers, attention maps both ways, saliency pooling into v_v and
    v_a, a conv1d refinement of each (length-1 sequences), concat, classify.
    """
    a = conv_stack(xa, params.audio_convs)
    v = conv_stack(xv, params.video_convs)
    audio_to_video = attention_map(a, v, params.audio_cross.attn, trace)
    video_to_audio = attention_map(v, a, params.video_cross.attn, trace)
    if reduce == "keys":
        v_v = attention_pool(audio_to_video, v, reduce)
        v_a = attention_pool(video_to_audio, a, reduce)
    else:
        v_v = attention_pool(video_to_audio, v, reduce)
        v_a = attention_pool(audio_to_video, a, reduce)
    dim = v_v.shape[0]
    v_ref = conv_stack(v_v.reshape(1, dim), params.video_post).reshape(dim)
    a_ref = conv_stack(v_a.reshape(1, dim), params.audio_post).reshape(dim)
    return classify_head(concat([a_ref, v_ref]), params.head)


# -- ablation baselines ---------------------------------------------------


def tensor_fusion(a: Tensor, b: Tensor) -> Tensor:
    """flatten([1; a] (x) [1; b]), of length (len(a) + 1) * (len(b) + 1)."""
    one = Tensor(np.ones(1))
    return outer(concat([one, a]), concat([one, b])).reshape(-1)


def fuse_baseline(
    xv_pooled: Tensor, xa_pooled: Tensor, strategy: FusionStrategy, params: FusionParams
) -> Tensor:
    if strategy is FusionStrategy.ADD:
        fused = xa_pooled + xv_pooled
    elif strategy is FusionStrategy.MULTIPLY:
        fused = xa_pooled * xv_pooled
    elif strategy is FusionStrategy.CONCAT:
        fused = concat([xa_pooled, xv_pooled])
    elif strategy is FusionStrategy.TENSOR_FUSION:
        fused = tensor_fusion(xa_pooled, xv_pooled)
    else:
        raise ArgumentError(f"{strategy!r} is not a baseline fusion")
    return classify_head(fused, params.head)


def fuse(
    strategy: FusionStrategy,
    xv: Optional[Tensor],
    xa: Optional[Tensor],
    params: FusionParams,
    eps: float = 1e-5,
    trace: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Dispatches branch outputs to the configured strategy."""
    strategy = FusionStrategy(strategy)
    if strategy is FusionStrategy.LATE_TRANSFORMER:
        return fuse_late_transformer(xv, xa, params, eps, trace)
    if strategy is FusionStrategy.INTERMEDIATE_TRANSFORMER:
        return fuse_intermediate_transformer(xv, xa, params, eps, trace)
    if strategy is FusionStrategy.INTERMEDIATE_ATTENTION:
        return fuse_intermediate_attention(xv, xa, params, trace=trace)
    if strategy is FusionStrategy.AUDIO_ONLY:
        return classify_head(mean_pool(xa), params.head)
    if strategy is FusionStrategy.VIDEO_ONLY:
        return classify_head(mean_pool(xv), params.head)
    return fuse_baseline(mean_pool(xv), mean_pool(xa), strategy, params)
