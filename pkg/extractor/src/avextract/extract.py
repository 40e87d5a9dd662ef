"""Extraction pipeline: media clips in, feature archive out.

For each sample the middle frame (index (frame_count - 1) // 2) goes
through the visual encoder and the audio track through the 32 kHz /
10 s / log-mel pipeline into the audio encoder; both embeddings are
L2-normalized. Class text embeddings are prompt ensembles: every filled
template is encoded, each embedding L2-normalized, the mean taken, and
the result normalized again. Samples whose clip cannot be decoded or has
no audio track are skipped and logged, never zero-filled; the skip count
lands in the archive manifest.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio as audio_mod
from .encoders import EncoderSet, build_encoders
from .errors import ManifestError, MediaError
from .media import MediaClip, load_clip
from .prompts import PromptEnsemble, get_ensemble

log = logging.getLogger("avextract")

ARCHIVE_FORMAT_VERSION = 1

SPLIT_CODES = {"Train": 0, "ValS": 1, "ValU": 2, "TestS": 3, "TestU": 4}
CLASS_ROLES = ("TrainSeen", "ValUnseen", "TestUnseen")
_ROLE_SPLITS = {
    "TrainSeen": {"Train", "ValS", "TestS"},
    "ValUnseen": {"ValU"},
    "TestUnseen": {"TestU"},
}


@dataclass(frozen=True)
class SampleSpec:
    media: str
    class_name: str
    split: str


@dataclass
class ExtractionSpec:
    dataset: str
    classes: list  # [(name, role)]
    samples: list  # [SampleSpec]
    prompt_set: str = "vggsound"  # ucf | activitynet | vggsound
    clip_model: str = "hashed/clip-vit-b32"
    clap_model: str = "hashed/clap-htsat-32k"
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        names = [n for n, _ in self.classes]
        if len(set(names)) != len(names):
            raise ManifestError("duplicate class names in manifest")
        for name, role in self.classes:
            if role not in CLASS_ROLES:
                raise ManifestError(
                    f"class {name!r}: unknown class_role {role!r}")
        known = set(names)
        unknown = sorted({s.class_name for s in self.samples} - known)
        if unknown:
            raise ManifestError(
                f"samples reference classes missing from the class list: "
                f"{unknown}")
        role_of = dict(self.classes)
        for s in self.samples:
            if s.split not in SPLIT_CODES:
                raise ManifestError(
                    f"{s.media}: unknown split {s.split!r}")
            if s.split not in _ROLE_SPLITS[role_of[s.class_name]]:
                raise ManifestError(
                    f"{s.media}: split {s.split} incompatible with class "
                    f"role {role_of[s.class_name]}")

    @classmethod
    def from_manifest(cls, path) -> "ExtractionSpec":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ManifestError(f"{path}: cannot read manifest: {exc}")
        try:
            classes = [(c["name"], c["class_role"])
                       for c in payload["classes"]]
            samples = [SampleSpec(s["media"], s["class"], s["split"])
                       for s in payload["samples"]]
            dataset = payload["dataset"]
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: manifest schema violation: {exc}")
        return cls(dataset=dataset, classes=classes, samples=samples,
                   prompt_set=payload.get("prompt_set", "vggsound"),
                   clip_model=payload.get("clip_model",
                                          "hashed/clip-vit-b32"),
                   clap_model=payload.get("clap_model",
                                          "hashed/clap-htsat-32k"),
                   base_dir=path.parent)


def _unit(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    return x / max(float(np.linalg.norm(x)), eps)


def middle_frame(frames: np.ndarray) -> np.ndarray:
    return frames[(frames.shape[0] - 1) // 2]


def extract_visual(clip: MediaClip, visual_encoder) -> np.ndarray:
    """Unit-norm visual embedding of the clip's middle frame."""
    return _unit(np.asarray(
        visual_encoder.encode_image(middle_frame(clip.frames)),
        dtype=np.float64)).astype(np.float32)


def extract_audio(clip: MediaClip, audio_encoder) -> np.ndarray:
    """Unit-norm audio embedding of the preprocessed audio track."""
    if clip.audio is None:
        raise MediaError("clip has no audio track")
    fixed, mel = audio_mod.process(clip.audio, clip.sample_rate)
    return _unit(np.asarray(
        audio_encoder.encode_clip_audio(fixed, mel),
        dtype=np.float64)).astype(np.float32)


def build_prompt_ensemble_embedding(class_name: str,
                                    ensemble: PromptEnsemble,
                                    text_encoder) -> np.ndarray:
    """Encode every filled template, normalize each, average, normalize."""
    if not class_name:
        raise ManifestError("class name must be nonempty")
    encoded = [_unit(np.asarray(text_encoder.encode_text(p),
                                dtype=np.float64))
               for p in ensemble.prompts(class_name)]
    return _unit(np.mean(encoded, axis=0)).astype(np.float32)


def _write_matrix(path: Path, array: np.ndarray, dtype: str) -> None:
    path.write_bytes(np.ascontiguousarray(array, dtype=dtype).tobytes())


def build_archive(spec: ExtractionSpec, out_dir,
                  encoders: EncoderSet = None) -> Path:
    """Extract every sample and write an engine-loadable archive.

    Returns the archive directory. Undecodable or audio-less samples are
    skipped (logged at WARNING); the manifest's `extra` block records the
    encoder identifiers, prompt set, and skip list.
    """
    if encoders is None:
        encoders = build_encoders(spec.clip_model, spec.clap_model)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    clip_ens = get_ensemble(spec.prompt_set, "clip")
    clap_ens = get_ensemble(spec.prompt_set, "clap")
    text_clip = np.stack([
        build_prompt_ensemble_embedding(name, clip_ens, encoders.clip_text)
        for name, _ in spec.classes])
    text_clap = np.stack([
        build_prompt_ensemble_embedding(name, clap_ens, encoders.clap_text)
        for name, _ in spec.classes])

    class_index = {name: i for i, (name, _) in enumerate(spec.classes)}
    visual_rows, audio_rows, labels, splits, skipped = [], [], [], [], []
    for sample in spec.samples:
        media_path = spec.base_dir / sample.media
        try:
            clip = load_clip(media_path)
            visual_row = extract_visual(clip, encoders.visual)
            audio_row = extract_audio(clip, encoders.audio)
        except MediaError as exc:
            log.warning("skipping %s: %s", sample.media, exc)
            skipped.append(sample.media)
            continue
        visual_rows.append(visual_row)
        audio_rows.append(audio_row)
        labels.append(class_index[sample.class_name])
        splits.append(SPLIT_CODES[sample.split])

    n = len(labels)
    d_in_v = encoders.visual.dim
    d_in_a = encoders.audio.dim
    manifest = {
        "format_version": ARCHIVE_FORMAT_VERSION,
        "dataset": spec.dataset,
        "dims": {"d_in_a": d_in_a, "d_in_v": d_in_v},
        "num_samples": n,
        "num_classes": len(spec.classes),
        "classes": [{"name": name, "class_role": role}
                    for name, role in spec.classes],
        "extra": {
            "clip_model": encoders.clip_model,
            "clap_model": encoders.clap_model,
            "prompt_set": spec.prompt_set,
            "skipped_samples": len(skipped),
            "skipped": skipped,
        },
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    _write_matrix(out / "audio.f32",
                  np.asarray(audio_rows, np.float32).reshape(n, d_in_a),
                  "<f4")
    _write_matrix(out / "visual.f32",
                  np.asarray(visual_rows, np.float32).reshape(n, d_in_v),
                  "<f4")
    _write_matrix(out / "text_clip.f32", text_clip, "<f4")
    _write_matrix(out / "text_clap.f32", text_clap, "<f4")
    _write_matrix(out / "labels.u32", np.asarray(labels, np.uint32), "<u4")
    _write_matrix(out / "splits.u8", np.asarray(splits, np.uint8), "u1")
    return out
