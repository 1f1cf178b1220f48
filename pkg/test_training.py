#!/usr/bin/env python3
"""
Tests for the optimizer, the training loop, checkpoints and the experiment drivers.
Runs under pytest, or directly as a script.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from data.schema import MultimodalSample, SynthSpec
from data.synthetic import generate_synthetic
from models.schema import ABLATION_STRATEGIES, FusionStrategy
from numerics.tensor import Tensor
from training.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from training.experiments import (
    adapt_feature_dims,
    checkpoint_name,
    derive_seed,
    run_ablation,
    run_cross_corpus,
    run_cv,
)
from training.optimizer import AdamState, adam_step
from training.schema import TrainConfig
from training.trainer import evaluate_model, train_one
from utils.errors import ArgumentError, CheckpointError, ContractError
from verification.invariants import check_adam_reference, check_early_stopping, run_suite, toy_model_config


def _corpus(n=12, seed=0, mode="both-redundant", name="synth", audio_dim=3, video_dim=3):
    return generate_synthetic(SynthSpec(
        name=name, n_samples=n, audio_dim=audio_dim, video_dim=video_dim, audio_length=(4, 6),
        video_length=(4, 6), mode=mode, separation=2.0, seed=seed,
    ))


def _cfg(**overrides):
    values = dict(max_epochs=2, early_stop_patience=1, learning_rate=1e-2, batch_size=4, folds=3, n_jobs=1)
    values.update(overrides)
    return TrainConfig(**values)


# -- optimizer --------------------------------------------------------------------


def test_adam_first_steps_by_hand():
    """With m_hat = g and v_hat = g^2 every early step moves by lr * g / (|g| + eps)"""
    cfg = _cfg(learning_rate=0.1, weight_decay=0.0)
    p = Tensor([1.0, -2.0, 0.5], requires_grad=True)
    g = np.array([0.5, -1.0, 2.0])
    state = AdamState.zeros({"p": p})
    expected = p.data.copy()
    for _ in range(2):
        adam_step({"p": p}, {"p": g}, state, cfg)
        expected = expected - 0.1 * g / (np.abs(g) + cfg.adam_epsilon)
        np.testing.assert_allclose(p.data, expected, atol=1e-12)
    assert state.step == 2


def test_adam_zero_gradient_is_a_fixed_point():
    cfg = _cfg(weight_decay=0.0)
    p = Tensor([[1.0, 2.0]], requires_grad=True)
    state = AdamState.zeros({"p": p})
    for _ in range(5):
        adam_step({"p": p}, {"p": np.zeros((1, 2))}, state, cfg)
    np.testing.assert_array_equal(p.data, [[1.0, 2.0]])


def test_decoupled_weight_decay():
    cfg = _cfg(learning_rate=0.1, weight_decay=0.5)
    p = Tensor([2.0], requires_grad=True)
    adam_step({"p": p}, {"p": np.zeros(1)}, AdamState.zeros({"p": p}), cfg)
    np.testing.assert_allclose(p.data, [2.0 - 0.1 * 0.5 * 2.0])


def test_adam_contracts():
    cfg = _cfg()
    p = Tensor([1.0, 2.0], requires_grad=True)
    state = AdamState.zeros({"p": p})
    with pytest.raises(ContractError):
        adam_step({"p": p}, {"p": np.zeros(3)}, state, cfg)
    with pytest.raises(ContractError):
        adam_step({"p": p}, {"q": np.zeros(2)}, state, cfg)


def test_adam_matches_reference():
    assert "max deviation" in check_adam_reference()


# -- configuration ----------------------------------------------------------------


def test_train_config_defaults_and_checks():
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.max_epochs, cfg.early_stop_patience) == (16, 225, 15)
    assert cfg.learning_rate == 1e-5 and cfg.weight_decay == 0.1
    with pytest.raises(ValidationError):
        TrainConfig(max_epochs=5, early_stop_patience=5)
    with pytest.raises(ValidationError):
        TrainConfig(adam_betas=(0.9, 1.0))
    with pytest.raises(ValidationError):
        TrainConfig(folds=2)


# -- training loop ----------------------------------------------------------------


def test_early_stopping_property():
    assert "stopped after" in check_early_stopping()


def test_frozen_model_stops_after_two_epochs():
    samples = _corpus()
    outcome = train_one(toy_model_config("concat"), samples[:8], samples[8:], _cfg(learning_rate=0.0, max_epochs=6))
    assert outcome.curves.epochs_trained == 2
    assert outcome.curves.best_epoch == 1
    assert outcome.checkpoint.epoch == 1


def test_training_loss_decreases():
    train = generate_synthetic(SynthSpec(n_samples=16, audio_dim=3, video_dim=3, audio_length=6, video_length=6,
                                         mode="audio-informative", separation=4.0, seed=1))
    val = generate_synthetic(SynthSpec(name="val", n_samples=6, audio_dim=3, video_dim=3, audio_length=6,
                                       video_length=6, mode="audio-informative", separation=4.0, seed=2))
    cfg = _cfg(batch_size=16, max_epochs=6, early_stop_patience=5, learning_rate=1e-3, weight_decay=0.0)
    outcome = train_one(toy_model_config("audio"), train, val, cfg)
    losses = outcome.curves.train_loss[:5]
    assert len(losses) == 5
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))


def test_training_is_seeded():
    samples = _corpus()
    first = train_one(toy_model_config("IT"), samples[:8], samples[8:], _cfg(seed=5))
    second = train_one(toy_model_config("IT"), samples[:8], samples[8:], _cfg(seed=5))
    assert first.curves == second.curves
    for name, values in first.checkpoint.parameters.items():
        np.testing.assert_array_equal(values, second.checkpoint.parameters[name])


def test_train_one_needs_data():
    samples = _corpus()
    with pytest.raises(ArgumentError):
        train_one(toy_model_config("IT"), samples, [], _cfg())
    with pytest.raises(ArgumentError):
        evaluate_model(train_one(toy_model_config("add"), samples[:8], samples[8:], _cfg()).model, [])


def test_evaluation_outputs():
    samples = _corpus()
    outcome = train_one(toy_model_config("IA"), samples[:8], samples[8:], _cfg())
    result = evaluate_model(outcome.model, samples)
    assert result.ids == [s.id for s in samples]
    assert result.predicted.shape == result.probabilities.shape == (12,)
    assert np.all((result.probabilities > 0) & (result.probabilities < 1))
    assert result.loss > 0


# -- checkpoints ------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    samples = _corpus()
    outcome = train_one(toy_model_config("LT"), samples[:8], samples[8:], _cfg())
    path = save_checkpoint(outcome.checkpoint, tmp_path / "m.mmff")
    assert path.read_bytes()[:4] == MAGIC

    restored = load_checkpoint(path)
    assert restored.epoch == outcome.checkpoint.epoch
    assert restored.optimizer_step == outcome.checkpoint.optimizer_step
    assert restored.config["fusion"] == "LT"
    assert set(restored.moments_m) == set(outcome.checkpoint.parameters)
    for name, values in outcome.checkpoint.moments_v.items():
        np.testing.assert_array_equal(restored.moments_v[name], values)
    np.testing.assert_array_equal(
        restored.build_model().predict_logits(samples), outcome.model.predict_logits(samples)
    )


def test_corrupt_checkpoints(tmp_path):
    samples = _corpus()
    outcome = train_one(toy_model_config("add"), samples[:8], samples[8:], _cfg())
    data = save_checkpoint(outcome.checkpoint, tmp_path / "m.mmff").read_bytes()

    (tmp_path / "magic.mmff").write_bytes(b"XXXX" + data[4:])
    (tmp_path / "short.mmff").write_bytes(data[:-5])
    (tmp_path / "version.mmff").write_bytes(data[:4] + (2).to_bytes(4, "little") + data[8:])
    for name, message in (("magic", "bad magic"), ("short", "truncated"), ("version", "version 2")):
        with pytest.raises(CheckpointError, match=message):
            load_checkpoint(tmp_path / f"{name}.mmff")
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "absent.mmff")


# -- experiments ------------------------------------------------------------------


def test_derived_seeds_and_names():
    assert derive_seed(0, 0, 1) == derive_seed(0, 0, 1)
    assert derive_seed(0, 0, 1) != derive_seed(0, 0, 2)
    assert 0 <= derive_seed(2 ** 64 - 1, 3) < 2 ** 64
    assert checkpoint_name(3, 0, 1) == "fold03.mmff"
    assert checkpoint_name(3, 1, 2) == "repeat01_fold03.mmff"


def test_cross_validation(tmp_path):
    samples = _corpus()
    result = run_cv(samples, toy_model_config("IT"), _cfg(), checkpoint_dir=tmp_path)
    assert result.k == 3 and len(result.folds) == 3
    assert [f.fold for f in result.folds] == [0, 1, 2]
    assert all(f.n_train + f.n_val + f.n_test == 12 for f in result.folds)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["fold00.mmff", "fold01.mmff", "fold02.mmff"]
    assert result.aggregate.runs == 3
    assert result.repeat_aggregate is None

    again = run_cv(samples, toy_model_config("IT"), _cfg())
    assert [f.report for f in again.folds] == [f.report for f in result.folds]


def test_repeated_cross_validation():
    result = run_cv(_corpus(), toy_model_config("concat"), _cfg(repeats=2))
    assert len(result.folds) == 6
    assert [(f.repeat, f.fold) for f in result.folds] == [(r, k) for r in range(2) for k in range(3)]
    assert result.repeat_aggregate is not None and result.repeat_aggregate.runs == 2


def test_ablation_order():
    assert [s.value for s in ABLATION_STRATEGIES] == ["add", "multi", "concat", "tf", "LT", "IT", "IA", "audio",
                                                     "video"]
    results = run_ablation(_corpus(), toy_model_config("IT"), _cfg(),
                           strategies=[FusionStrategy.VIDEO_ONLY, FusionStrategy.TENSOR_FUSION])
    assert list(results) == ["video", "tf"]
    assert results["tf"].strategy == "tf"


def test_feature_dims_are_adapted():
    wide = _corpus(audio_dim=5, video_dim=4)
    narrow = adapt_feature_dims(wide, 3, 3)
    assert all(s.audio_dim == 3 and s.video_dim == 3 for s in narrow)
    assert narrow[0].audio.shape[1] == wide[0].audio.shape[1]
    assert adapt_feature_dims(wide, 5, 4)[0].audio is wide[0].audio


def test_cross_corpus():
    first = _corpus(seed=1, name="first")
    second = _corpus(seed=2, name="second", audio_dim=4, video_dim=5)
    result = run_cross_corpus(first, second, toy_model_config("IA"), _cfg())
    assert result.k == 1 and len(result.folds) == 1
    assert result.folds[0].n_test == 12
    assert result.folds[0].n_train + result.folds[0].n_val == 12

    with pytest.raises(ArgumentError):
        run_cross_corpus(first, first, toy_model_config("IA"), _cfg())
    with pytest.raises(ArgumentError):
        run_cross_corpus(first, [], toy_model_config("IA"), _cfg())


def test_cross_corpus_with_flipped_labels():
    """A corpus whose class-conditional means are swapped cannot be scored above chance"""
    def corpus(seed, name):
        return generate_synthetic(SynthSpec(
            name=name, n_samples=40, audio_dim=3, video_dim=3, audio_length=6, video_length=6,
            mode="audio-informative", separation=6.0, seed=seed,
        ))

    flipped = [MultimodalSample(id=s.id, audio=s.audio, video=s.video, label=1 - s.label)
               for s in corpus(2, "flipped")]
    cfg = _cfg(max_epochs=8, early_stop_patience=7)
    result = run_cross_corpus(corpus(1, "source"), flipped, toy_model_config("audio"), cfg)
    assert result.aggregate.waa <= 0.6


@pytest.mark.slow
@pytest.mark.parametrize("experiment", ["xor task", "both-redundant task", "cross-corpus WAF1"])
def test_acceptance_experiment(experiment):
    results = run_suite(acceptance=True, only=[experiment])
    assert len(results) == 1
    assert results[0].passed, results[0].detail


if __name__ == "__main__":
    print("🧪 Testing training and experiments")
    print("=" * 60)
    raise SystemExit(pytest.main([__file__, "-q"]))
