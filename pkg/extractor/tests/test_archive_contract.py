"""Contract tests: archives written by this client must load in the GZSL
engine (avgzsl) without errors. These tests require the engine package to
be installed alongside (pip install -e .. --no-build-isolation)."""

import json

import numpy as np
import pytest

from avextract import cli
from avextract.errors import ManifestError
from avextract.extract import ExtractionSpec, build_archive

avgzsl_data = pytest.importorskip(
    "avgzsl.data", reason="contract tests need the engine installed")


def test_build_archive_loads_in_engine(mini_media, tmp_path):
    spec = ExtractionSpec.from_manifest(mini_media / "manifest.json")
    out = build_archive(spec, tmp_path / "arc")
    archive = avgzsl_data.load_archive(out)
    assert archive.num_samples == 5
    assert archive.num_classes == 4
    assert archive.d_in_a == 1024 and archive.d_in_v == 512
    assert archive.class_names[0] == "strumming guitar"
    assert archive.extra["clip_model"].startswith("hashed/")
    assert archive.extra["skipped_samples"] == 0
    # splits as declared in the media manifest
    assert archive.splits.tolist() == [0, 3, 0, 2, 4]
    assert archive.labels.tolist() == [0, 0, 1, 2, 3]


def test_all_rows_unit_norm(mini_media, tmp_path):
    spec = ExtractionSpec.from_manifest(mini_media / "manifest.json")
    out = build_archive(spec, tmp_path / "arc")
    archive = avgzsl_data.load_archive(out)
    for name in ("audio", "visual", "text_clip", "text_clap"):
        norms = np.linalg.norm(getattr(archive, name), axis=1)
        assert np.abs(norms - 1.0).max() < 1e-4, name


def test_archive_bytes_are_deterministic(mini_media, tmp_path):
    spec = ExtractionSpec.from_manifest(mini_media / "manifest.json")
    build_archive(spec, tmp_path / "a")
    build_archive(spec, tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_undecodable_clip_is_skipped_and_reported(mini_media, tmp_path):
    import shutil
    broken_root = tmp_path / "media"
    shutil.copytree(mini_media, broken_root)
    (broken_root / "clip2.npz").write_bytes(b"not an npz")
    spec = ExtractionSpec.from_manifest(broken_root / "manifest.json")
    out = build_archive(spec, tmp_path / "arc")
    archive = avgzsl_data.load_archive(out)
    assert archive.num_samples == 4
    assert archive.extra["skipped_samples"] == 1
    assert archive.extra["skipped"] == ["clip2.npz"]


def test_unknown_class_is_a_hard_error(mini_media):
    from avextract import SampleSpec
    manifest = json.loads((mini_media / "manifest.json").read_text())
    manifest["samples"][0]["class"] = "didgeridoo"
    with pytest.raises(ManifestError, match="didgeridoo"):
        ExtractionSpec(
            dataset=manifest["dataset"],
            classes=[(c["name"], c["class_role"])
                     for c in manifest["classes"]],
            samples=[SampleSpec(s["media"], s["class"], s["split"])
                     for s in manifest["samples"]],
        )


def test_incompatible_split_is_a_hard_error(mini_media):
    from avextract import SampleSpec
    with pytest.raises(ManifestError, match="incompatible"):
        ExtractionSpec(
            dataset="mini",
            classes=[("a", "TrainSeen"), ("b", "TestUnseen")],
            samples=[SampleSpec("x.npz", "b", "Train")],
        )


def test_cli_build_and_prompts(mini_media, tmp_path, capsys):
    out = tmp_path / "arc"
    assert cli.run_cli(["build", "--manifest",
                        str(mini_media / "manifest.json"),
                        "--out", str(out)]) == 0
    archive = avgzsl_data.load_archive(out)
    assert archive.num_samples == 5
    assert cli.run_cli(["prompts", "--dataset", "ucf",
                        "--encoder", "clip"]) == 0
    assert "48 templates" in capsys.readouterr().out
    assert cli.run_cli(["build", "--manifest",
                        str(tmp_path / "missing.json"),
                        "--out", str(out)]) == 2
