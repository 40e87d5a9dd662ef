import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avgzsl import data
from avgzsl.data import (ClassRole, Split, Stage, SynthSpec, batch_iterator,
                         load_archive, stage_view, synth_generate,
                         write_archive)
from avgzsl.errors import (ConfigError, CorruptArchiveError, DataError,
                           FormatError)
from avgzsl.model import ModelDims


def _tiny_spec(**kw):
    base = dict(train_seen_classes=3, val_unseen_classes=2,
                test_unseen_classes=2, samples_per_split=3,
                d_in_a=10, d_in_v=6, latent_dim=3, seed=5)
    base.update(kw)
    return SynthSpec(**base)


def test_synth_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(train_seen_classes=1)
    with pytest.raises(ConfigError):
        SynthSpec(val_unseen_classes=0)
    with pytest.raises(ConfigError):
        SynthSpec(separation=0.0)
    with pytest.raises(ConfigError):
        SynthSpec(alignment_noise=-0.1)
    with pytest.raises(ConfigError):
        SynthSpec.from_dict({"not_a_field": 1})


def test_synth_generate_deterministic():
    a = synth_generate(_tiny_spec())
    b = synth_generate(_tiny_spec())
    assert a.equals(b)


def test_synth_archive_bytes_identical(tmp_path):
    for name in ("one", "two"):
        write_archive(synth_generate(_tiny_spec()), tmp_path / name)
    for f in (tmp_path / "one").iterdir():
        assert f.read_bytes() == (tmp_path / "two" / f.name).read_bytes()


def test_round_trip_is_bit_exact(tmp_path):
    archive = synth_generate(_tiny_spec())
    write_archive(archive, tmp_path / "arc")
    loaded = load_archive(tmp_path / "arc")
    assert loaded.equals(archive)


def test_full_size_default_dims_fit_model_dims():
    archive = synth_generate(SynthSpec(samples_per_split=2,
                                       train_seen_classes=2,
                                       val_unseen_classes=1,
                                       test_unseen_classes=1))
    dims = ModelDims()
    assert archive.d_in_a == dims.d_in_a == 1024
    assert archive.d_in_v == dims.d_in_v == 512


def test_truncated_file_rejected_with_byte_counts(tmp_path):
    archive = synth_generate(_tiny_spec())
    write_archive(archive, tmp_path / "arc")
    f = tmp_path / "arc" / "audio.f32"
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(CorruptArchiveError, match="expected .* bytes"):
        load_archive(tmp_path / "arc")


def test_unknown_split_code_rejected(tmp_path):
    archive = synth_generate(_tiny_spec())
    write_archive(archive, tmp_path / "arc")
    f = tmp_path / "arc" / "splits.u8"
    blob = bytearray(f.read_bytes())
    blob[0] = 9
    f.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="split code"):
        load_archive(tmp_path / "arc")


def test_role_split_inconsistency_rejected(tmp_path):
    archive = synth_generate(_tiny_spec())
    write_archive(archive, tmp_path / "arc")
    # point a ValU sample's label at a TrainSeen class
    labels = np.frombuffer(
        (tmp_path / "arc" / "labels.u32").read_bytes(), "<u4").copy()
    vu = np.flatnonzero(archive.splits == int(Split.VAL_UNSEEN))[0]
    labels[vu] = 0  # class 0 is TrainSeen
    (tmp_path / "arc" / "labels.u32").write_bytes(labels.tobytes())
    with pytest.raises(CorruptArchiveError, match="incompatible"):
        load_archive(tmp_path / "arc")


def test_missing_manifest_rejected(tmp_path):
    with pytest.raises(DataError, match="manifest"):
        load_archive(tmp_path / "nope")


def test_wrong_format_version_rejected(tmp_path):
    archive = synth_generate(_tiny_spec())
    write_archive(archive, tmp_path / "arc")
    mf = tmp_path / "arc" / "manifest.json"
    manifest = json.loads(mf.read_text())
    manifest["format_version"] = 99
    mf.write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="format_version"):
        load_archive(tmp_path / "arc")


def test_write_validates_invariants(tmp_path):
    archive = synth_generate(_tiny_spec())
    archive.labels[0] = 99
    with pytest.raises(CorruptArchiveError):
        write_archive(archive, tmp_path / "arc")


def test_renormalize_flag(tmp_path):
    archive = synth_generate(_tiny_spec())
    archive.audio *= 3.0
    write_archive(archive, tmp_path / "arc")
    loaded = load_archive(tmp_path / "arc", renormalize=True)
    norms = np.linalg.norm(loaded.audio, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-4


def test_stage_views_class_arithmetic():
    spec = _tiny_spec(train_seen_classes=4, val_unseen_classes=2,
                      test_unseen_classes=2)
    archive = synth_generate(spec)
    v1 = stage_view(archive, Stage.ONE)
    v2 = stage_view(archive, Stage.TWO)
    assert v1.seen_classes.size == 4 and v1.unseen_classes.size == 2
    assert v2.seen_classes.size == 6 and v2.unseen_classes.size == 2
    assert not set(v1.seen_classes) & set(v1.unseen_classes)
    assert not set(v2.seen_classes) & set(v2.unseen_classes)


def test_stage_two_train_union():
    archive = synth_generate(_tiny_spec())
    v2 = stage_view(archive, Stage.TWO)
    expected = (archive.split_indices(Split.TRAIN).size
                + archive.split_indices(Split.VAL_SEEN).size
                + archive.split_indices(Split.VAL_UNSEEN).size)
    assert v2.train_indices.size == expected


def test_stage_views_have_no_leakage():
    archive = synth_generate(_tiny_spec())
    test_u = set(archive.split_indices(Split.TEST_UNSEEN).tolist())
    val_u = set(archive.split_indices(Split.VAL_UNSEEN).tolist())
    v1 = stage_view(archive, Stage.ONE)
    v2 = stage_view(archive, Stage.TWO)
    assert not set(v1.train_indices.tolist()) & (test_u | val_u)
    assert not set(v2.train_indices.tolist()) & test_u


def test_batch_iterator_sizes():
    sizes = [b.shape[0] for b in batch_iterator(np.arange(130), 64, 0, 0)]
    assert sizes == [64, 64, 2]
    sizes = [b.shape[0] for b in batch_iterator(np.arange(129), 64, 0, 0)]
    assert sizes == [64, 64]  # short tail of 1 dropped


def test_batch_iterator_determinism_and_reshuffle():
    a = np.concatenate(list(batch_iterator(np.arange(50), 16, 3, 1)))
    b = np.concatenate(list(batch_iterator(np.arange(50), 16, 3, 1)))
    c = np.concatenate(list(batch_iterator(np.arange(50), 16, 3, 2)))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_batch_iterator_rejects_tiny_batches():
    with pytest.raises(ConfigError):
        list(batch_iterator(np.arange(10), 1, 0, 0))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 200), batch=st.integers(2, 64),
       seed=st.integers(0, 5), epoch=st.integers(0, 5))
def test_batch_iterator_partitions_input(n, batch, seed, epoch):
    samples = np.arange(n) * 7
    visited = np.concatenate(
        list(batch_iterator(samples, batch, seed, epoch))
        or [np.array([], dtype=int)])
    tail = n % batch
    expected = n - (tail if tail == 1 else 0)
    assert visited.size == expected
    assert len(set(visited.tolist())) == visited.size
    assert set(visited.tolist()) <= set(samples.tolist())


def _oracle_unseen_accuracy(archive, stage):
    view = stage_view(archive, stage)
    idx = view.eval_unseen_indices
    feats = np.concatenate([archive.visual[idx], archive.audio[idx]], axis=1)
    text = np.concatenate([archive.text_clip, archive.text_clap], axis=1)
    feats = feats / np.linalg.norm(feats, axis=1, keepdims=True)
    text = text / np.linalg.norm(text, axis=1, keepdims=True)
    sims = feats @ text.T
    preds = view.unseen_classes[
        np.argmax(sims[:, view.unseen_classes], axis=1)]
    return float((preds == archive.labels[idx]).mean())


def test_infinite_separation_gives_perfect_raw_oracle():
    archive = synth_generate(_tiny_spec(separation=math.inf,
                                        alignment_noise=0.0))
    # with zero noise, features equal concepts; match against text directly
    assert _oracle_unseen_accuracy(archive, Stage.ONE) == 1.0
    assert _oracle_unseen_accuracy(archive, Stage.TWO) == 1.0


def test_default_spec_is_solvable_without_training(default_archive):
    # cosine matching of raw concatenated features against text embeddings
    assert _oracle_unseen_accuracy(default_archive, Stage.ONE) >= 0.9
    assert _oracle_unseen_accuracy(default_archive, Stage.TWO) >= 0.9


def test_default_spec_shape():
    spec = SynthSpec()
    assert (spec.train_seen_classes, spec.val_unseen_classes,
            spec.test_unseen_classes) == (8, 4, 4)
    assert spec.samples_per_split == 50
    assert spec.separation == 5.0


def test_default_archive_counts(default_archive):
    assert default_archive.num_classes == 16
    # TrainSeen classes carry Train/ValS/TestS, unseen classes one split each
    assert default_archive.num_samples == 8 * 150 + 4 * 50 + 4 * 50
