#!/usr/bin/env python3
"""
Tests for dataset ingest, synthetic corpora and fold planning.
Runs under pytest, or directly as a script.
"""

import json

import numpy as np
import pytest

from data.folds import plan_folds, split_fold, stratified_holdout
from data.loader import MANIFEST_NAME, load_dataset, read_manifest, save_dataset
from data.schema import MultimodalSample, SynthSpec
from data.synthetic import generate_synthetic
from utils.errors import ArgumentError, IngestError
from verification.invariants import check_fold_partition, check_xor_marginals


def _labelled(n, positives):
    return [
        MultimodalSample(id=f"s{i:03d}", audio=np.zeros((1, 1)), video=np.zeros((1, 1)), label=int(i < positives))
        for i in range(n)
    ]


def _spec(**overrides):
    values = dict(n_samples=11, audio_dim=3, video_dim=2, audio_length=(4, 7), video_length=5,
                  mode="both-redundant", separation=2.0, seed=3)
    values.update(overrides)
    return SynthSpec(**values)


def _write_manifest(root, samples, dims=(2, 3)):
    manifest = {"name": "tiny", "feature_dims": {"audio": dims[0], "video": dims[1]}, "samples": samples}
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


# -- synthetic --------------------------------------------------------------------


def test_synthetic_is_deterministic_and_balanced():
    first, second = generate_synthetic(_spec()), generate_synthetic(_spec())
    assert [s.id for s in first] == sorted(s.id for s in first)
    for a, b in zip(first, second):
        assert a.id == b.id and a.label == b.label
        np.testing.assert_array_equal(a.audio, b.audio)
        np.testing.assert_array_equal(a.video, b.video)

    labels = [s.label for s in first]
    assert abs(labels.count(1) - labels.count(0)) <= 1
    for s in first:
        assert s.audio.shape[0] == 3 and 4 <= s.audio.shape[1] <= 7
        assert s.video.shape == (5, 2)

    other = generate_synthetic(_spec(seed=4))
    assert not np.array_equal(first[0].audio, other[0].audio)


def test_synthetic_rejects_unknown_mode():
    with pytest.raises(ArgumentError):
        generate_synthetic(_spec(mode="audio-only"))


def test_informative_modes_shift_only_their_modality():
    samples = generate_synthetic(_spec(n_samples=400, mode="audio-informative", separation=4.0,
                                       audio_length=8, video_length=8))
    labels = np.array([s.label for s in samples])
    audio = np.array([s.audio.mean() for s in samples])
    video = np.array([s.video.mean() for s in samples])
    assert audio[labels == 1].mean() - audio[labels == 0].mean() > 1.5
    assert abs(video[labels == 1].mean() - video[labels == 0].mean()) < 0.3


def test_xor_needs_both_modalities():
    """Nearest-class-mean on one modality is at chance; the sign product recovers the label"""
    samples = generate_synthetic(_spec(n_samples=400, audio_dim=4, video_dim=4, audio_length=8, video_length=8,
                                       mode="xor-crossmodal", separation=3.0, seed=0))
    labels = np.array([s.label for s in samples])
    audio = np.array([s.audio.mean() for s in samples])
    video = np.array([s.video.mean() for s in samples])

    for feature in (audio, video):
        mid = (feature[labels == 0].mean() + feature[labels == 1].mean()) / 2
        high_is_one = feature[labels == 1].mean() > feature[labels == 0].mean()
        predicted = (feature > mid) == high_is_one
        assert np.mean(predicted.astype(int) == labels) <= 0.55

    bilinear = (audio * video < 0).astype(int)
    assert np.mean(bilinear == labels) >= 0.9
    assert "class-mean gaps" in check_xor_marginals()


# -- ingest -----------------------------------------------------------------------


def test_save_and_load_is_bit_exact(tmp_path):
    samples = generate_synthetic(_spec())
    manifest = save_dataset(samples, tmp_path, "tiny")
    loaded = load_dataset(manifest, n_jobs=2)
    assert [s.id for s in loaded] == [s.id for s in samples]
    for a, b in zip(samples, loaded):
        assert a.label == b.label
        np.testing.assert_array_equal(a.audio, b.audio)
        np.testing.assert_array_equal(a.video, b.video)
    assert read_manifest(manifest).feature_dims.audio == 3


def test_empty_manifest_loads_nothing(tmp_path):
    assert load_dataset(_write_manifest(tmp_path, [])) == []


def test_missing_manifest(tmp_path):
    with pytest.raises(IngestError, match="manifest not found"):
        load_dataset(tmp_path / "nope.json")


def test_duplicate_ids_are_rejected(tmp_path):
    entry = {"id": "a", "audio": "a.csv", "video": "v.csv", "label": 0}
    with pytest.raises(IngestError):
        read_manifest(_write_manifest(tmp_path, [entry, entry]))


def test_video_width_must_match_manifest(tmp_path):
    (tmp_path / "a.csv").write_text("1,2\n3,4\n", encoding="utf-8")
    (tmp_path / "v.csv").write_text("1,2,3,4,5\n6,7,8,9,10\n", encoding="utf-8")
    path = _write_manifest(tmp_path, [{"id": "subj-1", "audio": "a.csv", "video": "v.csv", "label": 1}], dims=(2, 4))
    with pytest.raises(IngestError) as info:
        load_dataset(path)
    assert info.value.sample_id == "subj-1"
    assert "subj-1" in str(info.value)


def test_bad_feature_files(tmp_path):
    (tmp_path / "a.csv").write_text("1,2\n3,nan\n", encoding="utf-8")
    (tmp_path / "v.csv").write_text("1,2,3\n", encoding="utf-8")
    (tmp_path / "t.csv").write_text("1,x\n3,4\n", encoding="utf-8")
    nan_entry = {"id": "n", "audio": "a.csv", "video": "v.csv", "label": 0}
    with pytest.raises(IngestError, match="non-finite"):
        load_dataset(_write_manifest(tmp_path, [nan_entry]))
    text_entry = {"id": "t", "audio": "t.csv", "video": "v.csv", "label": 0}
    with pytest.raises(IngestError):
        load_dataset(_write_manifest(tmp_path, [text_entry]))
    missing_entry = {"id": "m", "audio": "gone.csv", "video": "v.csv", "label": 0}
    with pytest.raises(IngestError, match="not found"):
        load_dataset(_write_manifest(tmp_path, [missing_entry]))


def test_sample_validation():
    with pytest.raises(IngestError):
        MultimodalSample(id="x", audio=np.ones((2, 2)), video=np.ones((2, 2)), label=2)
    with pytest.raises(IngestError):
        MultimodalSample(id="x", audio=np.ones(3), video=np.ones((2, 2)), label=0)


# -- folds ------------------------------------------------------------------------


def test_folds_balance_twenty_samples():
    plan = plan_folds(_labelled(20, 10), k=10, seed=0)
    for fold in plan.folds():
        assert len(fold) == 2
        assert sum(int(i[1:]) < 10 for i in fold) == 1


def test_folds_with_uneven_classes():
    plan = plan_folds(_labelled(23, 9), k=10, seed=5)
    positives = [sum(int(i[1:]) < 9 for i in fold) for fold in plan.folds()]
    assert set(positives) <= {0, 1}
    assert sum(positives) == 9


def test_leave_one_out_and_limits():
    samples = _labelled(6, 3)
    plan = plan_folds(samples, k=6, seed=1)
    assert all(len(fold) == 1 for fold in plan.folds())
    with pytest.raises(ArgumentError):
        plan_folds(samples, k=7)
    with pytest.raises(ArgumentError):
        plan_folds(samples, k=1)


def test_fold_plans_are_seeded():
    samples = _labelled(30, 12)
    assert plan_folds(samples, 5, seed=2) == plan_folds(samples, 5, seed=2)
    assert plan_folds(samples, 5, seed=2) != plan_folds(samples, 5, seed=3)


def test_partition_property():
    assert "plans" in check_fold_partition()


def test_split_fold_roles():
    samples = _labelled(20, 10)
    plan = plan_folds(samples, k=5, seed=0)
    train, val, test = split_fold(samples, plan, test_fold=4, val_fold=0)
    assert {s.id for s in test} == set(plan.fold_ids(4))
    assert {s.id for s in val} == set(plan.fold_ids(0))
    assert len(train) + len(val) + len(test) == 20
    assert not {s.id for s in train} & ({s.id for s in val} | {s.id for s in test})


def test_stratified_holdout():
    kept, held = stratified_holdout(_labelled(20, 10), fraction=0.1, seed=0)
    assert len(held) == 2
    assert sorted(s.label for s in held) == [0, 1]
    assert len(kept) == 18


def test_holdout_needs_two_samples_per_class():
    with pytest.raises(ArgumentError, match=r"class 1 has a single sample \(s000\)"):
        stratified_holdout(_labelled(6, 1), fraction=0.1, seed=0)

    # an absent class is skipped rather than rejected
    kept, held = stratified_holdout(_labelled(6, 0), fraction=0.1, seed=0)
    assert len(held) == 1 and len(kept) == 5


if __name__ == "__main__":
    print("🧪 Testing datasets and folds")
    print("=" * 60)
    raise SystemExit(pytest.main([__file__, "-q"]))
