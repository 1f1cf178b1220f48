#!/usr/bin/env python3
"""
Tests for the video and audio branches.
Runs under pytest, or directly as a script.
"""

import numpy as np
import pytest

from models.audio_branch import assemble_sequence, audio_forward, encoder_layer, interp_pos_embed
from models.layers import Initializer, mlp, norm
from models.mmfformer import MMFformer
from models.video_branch import (
    VideoBlockParams,
    downsample_temporal,
    prepend_cls_and_pos,
    self_attention_block,
    video_forward,
)
from numerics.tensor import Tensor, no_grad
from utils.errors import ArgumentError, ConfigurationError, DimensionError
from verification.invariants import check_audio_patch_counts, toy_model_config


def _model(fusion, **overrides):
    return MMFformer(toy_model_config(fusion, **overrides), seed=0)


# -- video ----------------------------------------------------------------------


@pytest.mark.parametrize("length", [1, 3, 4, 20])
def test_video_output_shape_is_independent_of_length(length):
    model = _model("video")
    x = np.random.default_rng(length).normal(size=(length, 3))
    with no_grad():
        out = video_forward(Tensor(x), model.video, model.video_cfg)
    assert out.shape == (model.config.video_length + 1, model.config.embed_dim)


def test_video_rejects_wrong_feature_width():
    model = _model("video")
    with pytest.raises(DimensionError):
        video_forward(Tensor(np.ones((5, 4))), model.video, model.video_cfg)
    with pytest.raises(ArgumentError):
        downsample_temporal(Tensor(np.ones(5)), model.video, model.video_cfg)


def test_disabled_downsampling_needs_fixed_length():
    model = _model("video", video_downsample=False)
    x = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(downsample_temporal(Tensor(x), model.video, model.video_cfg).data, x)
    with pytest.raises(ConfigurationError):
        downsample_temporal(Tensor(np.ones((5, 3))), model.video, model.video_cfg)


def test_cls_token_leads_the_sequence():
    model = _model("video")
    xe = Tensor(np.zeros((4, 4)))
    tokens = prepend_cls_and_pos(xe, model.video).data
    np.testing.assert_allclose(tokens[0], model.video.cls_token.data[0] + model.video.pos.data[0])
    np.testing.assert_allclose(tokens[1:], model.video.pos.data[1:])

    with pytest.raises(ConfigurationError):
        prepend_cls_and_pos(Tensor(np.zeros((5, 4))), model.video)


def test_self_attention_block_residuals():
    """With zero value weights the attention term vanishes: out = MLP(LN(x)) + x"""
    init = Initializer(np.random.default_rng(3), std=0.5)
    block = VideoBlockParams(attn=init.attention(4), norm=init.layer_norm(4), mlp=init.mlp(4, 6))
    block.attn.wv = Tensor(np.zeros((4, 4)))
    x = Tensor(np.random.default_rng(4).normal(size=(5, 4)))
    out = self_attention_block(x, block, num_heads=2).data
    expected = (mlp(norm(x, block.norm, 1e-5), block.mlp) + x).data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_self_attention_block_identity():
    init = Initializer(np.random.default_rng(6), std=0.5)
    block = VideoBlockParams(attn=init.attention(4), norm=init.layer_norm(4), mlp=init.mlp(4, 6))
    block.attn.wv = Tensor(np.zeros((4, 4)))
    block.mlp.w1 = Tensor(np.zeros((4, 6)))
    block.mlp.w2 = Tensor(np.zeros((6, 4)))
    x = Tensor(np.random.default_rng(7).normal(size=(5, 4)))
    np.testing.assert_array_equal(self_attention_block(x, block, num_heads=2).data, x.data)


def test_positional_encoding_orders_time_steps():
    model = _model("video", video_downsample=False)
    x = np.random.default_rng(8).normal(size=(4, 3))
    perm = np.array([2, 0, 3, 1])

    def forward(values):
        with no_grad():
            return video_forward(Tensor(values), model.video, model.video_cfg).data

    out, shuffled = forward(x), forward(x[perm])
    assert not np.allclose(shuffled[1:], out[1:][perm], atol=1e-6)

    # without positions the blocks only see a set of tokens
    model.video.pos.data = np.zeros_like(model.video.pos.data)
    out, shuffled = forward(x), forward(x[perm])
    np.testing.assert_allclose(shuffled[1:], out[1:][perm], atol=1e-12)
    np.testing.assert_allclose(shuffled[0], out[0], atol=1e-12)


# -- audio ----------------------------------------------------------------------


@pytest.mark.parametrize("length", [1, 2, 9, 31])
def test_audio_output_shape(length):
    model = _model("audio")
    h, w = model.audio_cfg.grid
    x = np.random.default_rng(length).normal(size=(3, length))
    with no_grad():
        out = audio_forward(Tensor(x), model.audio, model.audio_cfg)
    assert out.shape == (h * w + 2, model.config.embed_dim)


def test_audio_rejects_wrong_feature_count():
    model = _model("audio")
    with pytest.raises(DimensionError):
        audio_forward(Tensor(np.ones((4, 6))), model.audio, model.audio_cfg)


def test_audio_patch_counts_match_enumeration():
    assert "combinations" in check_audio_patch_counts()


def test_positional_grid_identity_and_resize():
    model = _model("audio")
    base = model.audio.pos_base
    D, h, w = base.shape
    np.testing.assert_allclose(interp_pos_embed(base, (h, w)).data, base.data.reshape(D, h * w).T, atol=1e-12)
    assert interp_pos_embed(base, (2, 2)).shape == (4, D)

    # a grid that differs from the base grid still builds a full sequence
    other = _model("audio", audio_freq=6, audio_time=8)
    with no_grad():
        out = audio_forward(Tensor(np.ones((3, 5))), other.audio, other.audio_cfg)
    assert out.shape == (3 * 4 + 2, 4)


def test_sequence_assembly():
    model = _model("audio")
    xp = Tensor(np.ones((4, 4)))
    xe = Tensor(np.full((4, 4), 2.0))
    tokens = assemble_sequence(xp, xe, model.audio).data
    p = model.audio
    np.testing.assert_allclose(tokens[0], (p.cls_token.data + p.cls_pos.data)[0])
    np.testing.assert_allclose(tokens[1], (p.dist_token.data + p.dist_pos.data)[0])
    np.testing.assert_allclose(tokens[2:], 3.0)
    with pytest.raises(DimensionError):
        assemble_sequence(xp, Tensor(np.ones((3, 4))), model.audio)


def test_encoder_layer_is_post_norm():
    """Fresh norm parameters are (1, 0), so every output row is standardized"""
    model = _model("audio")
    x = Tensor(np.random.default_rng(5).normal(scale=3.0, size=(6, 4)))
    out = encoder_layer(x, model.audio.layers[0], num_heads=2).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)


def test_encoder_layer_is_idempotent_without_sublayers():
    """Attention and MLP zeroed: the layer only re-normalizes rows that are already normalized"""
    model = _model("audio")
    layer = model.audio.layers[0]
    layer.attn.wv = Tensor(np.zeros_like(layer.attn.wv.data))
    layer.mlp.w2 = Tensor(np.zeros_like(layer.mlp.w2.data))
    x = Tensor(np.random.default_rng(9).normal(loc=2.0, scale=4.0, size=(6, 4)))
    once = encoder_layer(x, layer, num_heads=2, eps=1e-12)
    twice = encoder_layer(once, layer, num_heads=2, eps=1e-12)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-9)


def test_prefix_tokens_reach_the_output_without_patches():
    model = _model("audio")

    def forward():
        with no_grad():
            return audio_forward(Tensor(np.zeros((3, 6))), model.audio, model.audio_cfg).data

    base = forward()
    shift = np.linspace(-1.0, 1.0, model.config.embed_dim)
    model.audio.cls_token.data = model.audio.cls_token.data + shift
    moved_cls = forward()
    assert not np.allclose(moved_cls[0], base[0])

    model.audio.dist_token.data = model.audio.dist_token.data + shift
    moved_dist = forward()
    assert not np.allclose(moved_dist[1], moved_cls[1])


def test_audio_without_channel_norm():
    model = _model("audio", audio_norm="none")
    with no_grad():
        out = audio_forward(Tensor(np.ones((3, 7))), model.audio, model.audio_cfg)
    assert np.all(np.isfinite(out.data))


if __name__ == "__main__":
    print("🧪 Testing the video and audio branches")
    print("=" * 60)
    raise SystemExit(pytest.main([__file__, "-q"]))
