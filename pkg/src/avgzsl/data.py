"""Feature archives, split semantics, batching, and synthetic data.

An archive is a directory holding ``manifest.json`` plus raw binary
siblings, all little-endian and row-major:

    audio.f32      N x d_in_a   float32 sample audio features
    visual.f32     N x d_in_v   float32 sample visual features
    text_clip.f32  K x d_in_v   float32 per-class vision-language embeddings
    text_clap.f32  K x d_in_a   float32 per-class audio-language embeddings
    labels.u32     N            uint32 class index per sample
    splits.u8      N            uint8 split code per sample

Split codes: 0=Train, 1=ValS, 2=ValU, 3=TestS, 4=TestU. Each class has a
role (TrainSeen, ValUnseen, TestUnseen) and every sample's split must be
compatible with its class role: TrainSeen classes may hold Train/ValS/TestS
samples, ValUnseen classes hold ValU, TestUnseen classes hold TestU.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigError, CorruptArchiveError, DataError, FormatError)

ARCHIVE_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


class Split(enum.IntEnum):
    TRAIN = 0
    VAL_SEEN = 1
    VAL_UNSEEN = 2
    TEST_SEEN = 3
    TEST_UNSEEN = 4


class ClassRole(str, enum.Enum):
    TRAIN_SEEN = "TrainSeen"
    VAL_UNSEEN = "ValUnseen"
    TEST_UNSEEN = "TestUnseen"


_ROLE_SPLITS = {
    ClassRole.TRAIN_SEEN: {Split.TRAIN, Split.VAL_SEEN, Split.TEST_SEEN},
    ClassRole.VAL_UNSEEN: {Split.VAL_UNSEEN},
    ClassRole.TEST_UNSEEN: {Split.TEST_UNSEEN},
}


class Stage(enum.Enum):
    ONE = 1
    TWO = 2


@dataclass
class FeatureArchive:
    dataset: str
    d_in_a: int
    d_in_v: int
    class_names: list
    class_roles: list  # list of ClassRole, aligned with class_names
    audio: np.ndarray  # (N, d_in_a) float32
    visual: np.ndarray  # (N, d_in_v) float32
    text_clip: np.ndarray  # (K, d_in_v) float32
    text_clap: np.ndarray  # (K, d_in_a) float32
    labels: np.ndarray  # (N,) int64
    splits: np.ndarray  # (N,) uint8
    extra: dict = field(default_factory=dict)

    @property
    def num_samples(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def classes_with_role(self, role: ClassRole) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.class_roles)
                         if r == role], dtype=np.int64)

    def split_indices(self, split: Split) -> np.ndarray:
        return np.flatnonzero(self.splits == int(split))

    def validate(self) -> None:
        n, k = self.num_samples, self.num_classes
        if len(self.class_roles) != k:
            raise FormatError("class_roles length does not match class_names")
        if len(set(self.class_names)) != k:
            raise DataError("class names must be unique")
        expected = {
            "audio": (n, self.d_in_a), "visual": (n, self.d_in_v),
            "text_clip": (k, self.d_in_v), "text_clap": (k, self.d_in_a),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise CorruptArchiveError(
                    f"{name}: shape {arr.shape}, manifest implies {shape}")
            if not np.isfinite(arr).all():
                raise CorruptArchiveError(f"{name}: non-finite entries")
        if self.labels.shape != (n,) or self.splits.shape != (n,):
            raise CorruptArchiveError("labels/splits length mismatch")
        if n and (self.labels.min() < 0 or self.labels.max() >= k):
            raise CorruptArchiveError(
                f"labels outside [0, {k}): "
                f"[{self.labels.min()}, {self.labels.max()}]")
        valid_codes = {int(s) for s in Split}
        bad = set(np.unique(self.splits)) - valid_codes
        if bad:
            raise FormatError(f"unknown split code(s): {sorted(bad)}")
        for i in range(n):
            role = self.class_roles[int(self.labels[i])]
            if Split(int(self.splits[i])) not in _ROLE_SPLITS[role]:
                raise CorruptArchiveError(
                    f"sample {i}: split {Split(int(self.splits[i])).name} "
                    f"incompatible with class role {role.value}")

    def equals(self, other: "FeatureArchive") -> bool:
        return (
            self.dataset == other.dataset
            and self.d_in_a == other.d_in_a
            and self.d_in_v == other.d_in_v
            and self.class_names == other.class_names
            and self.class_roles == other.class_roles
            and np.array_equal(self.audio, other.audio)
            and np.array_equal(self.visual, other.visual)
            and np.array_equal(self.text_clip, other.text_clip)
            and np.array_equal(self.text_clap, other.text_clap)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.splits, other.splits)
            and self.extra == other.extra
        )


# ---------------------------------------------------------------------------
# serialization


def write_archive(archive: FeatureArchive, path) -> None:
    archive.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": ARCHIVE_FORMAT_VERSION,
        "dataset": archive.dataset,
        "dims": {"d_in_a": archive.d_in_a, "d_in_v": archive.d_in_v},
        "num_samples": archive.num_samples,
        "num_classes": archive.num_classes,
        "classes": [
            {"name": name, "class_role": role.value}
            for name, role in zip(archive.class_names, archive.class_roles)
        ],
    }
    if archive.extra:
        manifest["extra"] = archive.extra
    (root / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (root / "audio.f32").write_bytes(
        np.ascontiguousarray(archive.audio, dtype="<f4").tobytes())
    (root / "visual.f32").write_bytes(
        np.ascontiguousarray(archive.visual, dtype="<f4").tobytes())
    (root / "text_clip.f32").write_bytes(
        np.ascontiguousarray(archive.text_clip, dtype="<f4").tobytes())
    (root / "text_clap.f32").write_bytes(
        np.ascontiguousarray(archive.text_clap, dtype="<f4").tobytes())
    (root / "labels.u32").write_bytes(
        np.ascontiguousarray(archive.labels, dtype="<u4").tobytes())
    (root / "splits.u8").write_bytes(
        np.ascontiguousarray(archive.splits, dtype="u1").tobytes())


def _read_matrix(root: Path, name: str, rows: int, cols: int,
                 dtype: str) -> np.ndarray:
    f = root / name
    if not f.exists():
        raise CorruptArchiveError(f"missing archive file: {f}")
    data = f.read_bytes()
    itemsize = np.dtype(dtype).itemsize
    expected = rows * cols * itemsize
    if len(data) != expected:
        raise CorruptArchiveError(
            f"{f}: expected {expected} bytes ({rows}x{cols} {dtype}), "
            f"found {len(data)}")
    return np.frombuffer(data, dtype=dtype).copy().reshape(rows, cols)


def load_archive(path, renormalize: bool = False) -> FeatureArchive:
    """Load and validate an archive directory.

    Features are stored exactly as extracted and are not re-normalized;
    pass `renormalize=True` to force L2 normalization of every feature and
    text row (experimental switch, default off).
    """
    root = Path(path)
    mf = root / MANIFEST_NAME
    if not mf.exists():
        raise DataError(f"no archive at {root} (missing {MANIFEST_NAME})")
    try:
        manifest = json.loads(mf.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"{mf}: invalid JSON: {exc}")
    try:
        version = manifest["format_version"]
        dataset = manifest["dataset"]
        d_in_a = int(manifest["dims"]["d_in_a"])
        d_in_v = int(manifest["dims"]["d_in_v"])
        n = int(manifest["num_samples"])
        classes = manifest["classes"]
        names = [c["name"] for c in classes]
        roles = [ClassRole(c["class_role"]) for c in classes]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{mf}: manifest schema violation: {exc}")
    if version != ARCHIVE_FORMAT_VERSION:
        raise FormatError(
            f"{mf}: unsupported format_version {version} "
            f"(expected {ARCHIVE_FORMAT_VERSION})")
    if manifest.get("num_classes", len(classes)) != len(classes):
        raise FormatError(f"{mf}: num_classes disagrees with classes list")
    k = len(classes)

    audio = _read_matrix(root, "audio.f32", n, d_in_a, "<f4")
    visual = _read_matrix(root, "visual.f32", n, d_in_v, "<f4")
    text_clip = _read_matrix(root, "text_clip.f32", k, d_in_v, "<f4")
    text_clap = _read_matrix(root, "text_clap.f32", k, d_in_a, "<f4")
    labels_raw = _read_matrix(root, "labels.u32", n, 1, "<u4").reshape(n)
    splits = _read_matrix(root, "splits.u8", n, 1, "u1").reshape(n)

    archive = FeatureArchive(
        dataset=dataset, d_in_a=d_in_a, d_in_v=d_in_v,
        class_names=names, class_roles=roles,
        audio=audio, visual=visual,
        text_clip=text_clip, text_clap=text_clap,
        labels=labels_raw.astype(np.int64), splits=splits,
        extra=manifest.get("extra", {}),
    )
    archive.validate()
    if renormalize:
        for name in ("audio", "visual", "text_clip", "text_clap"):
            arr = getattr(archive, name)
            norms = np.linalg.norm(arr, axis=1, keepdims=True)
            setattr(archive, name,
                    (arr / np.maximum(norms, 1e-12)).astype(np.float32))
    return archive


# ---------------------------------------------------------------------------
# stage views


@dataclass(frozen=True)
class StageView:
    stage: Stage
    train_indices: np.ndarray
    eval_seen_indices: np.ndarray
    eval_unseen_indices: np.ndarray
    seen_classes: np.ndarray
    unseen_classes: np.ndarray


def stage_view(archive: FeatureArchive, stage: Stage) -> StageView:
    """Stage One trains on the Train split of TrainSeen classes and
    evaluates on ValS/ValU; Stage Two trains on Train+ValS+ValU with
    TrainSeen+ValUnseen as the seen set and evaluates on TestS/TestU.
    """
    train_seen = archive.classes_with_role(ClassRole.TRAIN_SEEN)
    val_unseen = archive.classes_with_role(ClassRole.VAL_UNSEEN)
    test_unseen = archive.classes_with_role(ClassRole.TEST_UNSEEN)
    if stage is Stage.ONE:
        return StageView(
            stage=stage,
            train_indices=archive.split_indices(Split.TRAIN),
            eval_seen_indices=archive.split_indices(Split.VAL_SEEN),
            eval_unseen_indices=archive.split_indices(Split.VAL_UNSEEN),
            seen_classes=np.sort(train_seen),
            unseen_classes=np.sort(val_unseen),
        )
    train = np.sort(np.concatenate([
        archive.split_indices(Split.TRAIN),
        archive.split_indices(Split.VAL_SEEN),
        archive.split_indices(Split.VAL_UNSEEN),
    ]))
    return StageView(
        stage=stage,
        train_indices=train,
        eval_seen_indices=archive.split_indices(Split.TEST_SEEN),
        eval_unseen_indices=archive.split_indices(Split.TEST_UNSEEN),
        seen_classes=np.sort(np.concatenate([train_seen, val_unseen])),
        unseen_classes=np.sort(test_unseen),
    )


def batch_iterator(samples: np.ndarray, batch_size: int = 64, seed: int = 0,
                   epoch: int = 0):
    """Yield per-epoch shuffled index batches, deterministically keyed by
    (seed, epoch). A trailing batch smaller than 2 is dropped (batch norm
    needs at least two rows); anything larger is kept.
    """
    if batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {batch_size}")
    samples = np.asarray(samples)
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(samples.shape[0])
    shuffled = samples[order]
    for start in range(0, shuffled.shape[0], batch_size):
        chunk = shuffled[start:start + batch_size]
        if chunk.shape[0] < 2:
            break
        yield chunk


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale synthetic GZSL task in the archive format.

    Classes live in a shared latent space: seen classes sit on mutually
    orthogonal anchor directions, and each unseen class is a three-anchor
    Dirichlet blend (validation-unseen over the seen anchors, test-unseen
    over seen plus validation-unseen), rejection-sampled so no two classes
    exceed `max_class_cos` pairwise cosine. Blending keeps unseen classes
    inside the region the seen classes span, which is what makes them
    reachable from seen-class training, and places them between seen
    classes so the trained model's seen bias shows up in both stages.

    Validation-unseen classes additionally come in confusable pairs at
    `val_pair_cos`: telling pair members apart is an unseen-versus-unseen
    distinction that calibrated stacking cannot repair, so validation HM
    stays sensitive to embedding quality instead of saturating.

    Each latent is projected into each modality and normalized to give the
    per-class concept vectors; class text embeddings are the concepts
    jittered by `alignment_noise`; sample features are the concepts plus
    Gaussian noise of relative norm 1/separation, L2-normalized. At high
    separation a nearest-concept scan classifies perfectly, so the task is
    solvable before any training, and unseen classes are solvable only
    through the text embeddings.
    """

    train_seen_classes: int = 8
    val_unseen_classes: int = 4
    test_unseen_classes: int = 4
    samples_per_split: int = 50
    d_in_a: int = 1024
    d_in_v: int = 512
    latent_dim: int = 8
    separation: float = 5.0
    alignment_noise: float = 0.1
    max_class_cos: float = 0.65
    val_pair_cos: float = 0.88
    seed: int = 0
    dataset: str = "synthetic"

    def __post_init__(self):
        if self.train_seen_classes < 2:
            raise ConfigError("need at least 2 seen classes")
        if self.val_unseen_classes < 1 or self.test_unseen_classes < 1:
            raise ConfigError("need at least 1 unseen class per stage")
        if not self.separation > 0:
            raise ConfigError("separation must be > 0")
        if self.alignment_noise < 0:
            raise ConfigError("alignment_noise must be >= 0")
        if self.samples_per_split < 2:
            raise ConfigError("need at least 2 samples per class per split")
        if not 0 < self.max_class_cos < 1:
            raise ConfigError("max_class_cos must be in (0, 1)")
        if not 0 < self.val_pair_cos < 1:
            raise ConfigError("val_pair_cos must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "train_seen_classes": self.train_seen_classes,
            "val_unseen_classes": self.val_unseen_classes,
            "test_unseen_classes": self.test_unseen_classes,
            "samples_per_split": self.samples_per_split,
            "d_in_a": self.d_in_a, "d_in_v": self.d_in_v,
            "latent_dim": self.latent_dim,
            "separation": self.separation,
            "alignment_noise": self.alignment_noise,
            "max_class_cos": self.max_class_cos,
            "val_pair_cos": self.val_pair_cos,
            "seed": self.seed, "dataset": self.dataset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown SynthSpec keys: {sorted(unknown)}")
        return cls(**d)


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x)


def _class_latents(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Seen anchors plus blended unseen latents, separation-capped."""
    dim = max(spec.latent_dim, spec.train_seen_classes)
    target = math.sqrt(dim)
    latents = [np.eye(dim)[i] * target
               for i in range(spec.train_seen_classes)]
    tries = 400

    def blend(pool_size: int) -> np.ndarray:
        # best-effort rejection: keep the most separated draw if no draw
        # satisfies the cap
        best, best_cos = None, np.inf
        for _ in range(tries):
            anchors = rng.choice(pool_size, size=min(3, pool_size),
                                 replace=False)
            weights = rng.dirichlet(2.0 * np.ones(anchors.size))
            z = weights @ np.asarray([latents[i] for i in anchors])
            z = _unit(z) * target
            worst = max(abs(float(np.dot(_unit(z), _unit(p))))
                        for p in latents)
            if worst <= spec.max_class_cos:
                return z
            if worst < best_cos:
                best, best_cos = z, worst
        return best

    # validation-unseen classes arrive as confusable pairs: both members
    # sit half the pair angle off a shared blend direction
    remaining = spec.val_unseen_classes
    while remaining > 0:
        center = _unit(blend(spec.train_seen_classes))
        ortho = rng.normal(size=dim)
        ortho -= (ortho @ center) * center
        ortho = _unit(ortho)
        half = 0.5 * math.acos(spec.val_pair_cos)
        for sign in (1.0, -1.0):
            if remaining == 0:
                break
            z = math.cos(half) * center + sign * math.sin(half) * ortho
            latents.append(z * target)
            remaining -= 1
    for _ in range(spec.test_unseen_classes):
        latents.append(blend(spec.train_seen_classes
                             + spec.val_unseen_classes))
    return np.asarray(latents)


def synth_generate(spec: SynthSpec) -> FeatureArchive:
    rng = np.random.default_rng(spec.seed)
    roles = ([ClassRole.TRAIN_SEEN] * spec.train_seen_classes
             + [ClassRole.VAL_UNSEEN] * spec.val_unseen_classes
             + [ClassRole.TEST_UNSEEN] * spec.test_unseen_classes)
    k = len(roles)
    names = [f"class_{i:02d}" for i in range(k)]

    latents = _class_latents(spec, rng)
    proj_v = rng.normal(size=(latents.shape[1], spec.d_in_v))
    proj_a = rng.normal(size=(latents.shape[1], spec.d_in_a))
    concept_v = np.stack([_unit(z @ proj_v) for z in latents])
    concept_a = np.stack([_unit(z @ proj_a) for z in latents])

    def jitter(c, d):
        if spec.alignment_noise == 0:
            return c
        return _unit(c + spec.alignment_noise / math.sqrt(d)
                     * rng.normal(size=d))

    text_clip = np.stack([jitter(c, spec.d_in_v) for c in concept_v])
    text_clap = np.stack([jitter(c, spec.d_in_a) for c in concept_a])

    noise_v = 1.0 / (spec.separation * math.sqrt(spec.d_in_v))
    noise_a = 1.0 / (spec.separation * math.sqrt(spec.d_in_a))

    visual_rows, audio_rows, labels, splits = [], [], [], []
    for ci, role in enumerate(roles):
        for split in sorted(_ROLE_SPLITS[role], key=int):
            for _ in range(spec.samples_per_split):
                v = _unit(concept_v[ci] + noise_v * rng.normal(size=spec.d_in_v))
                a = _unit(concept_a[ci] + noise_a * rng.normal(size=spec.d_in_a))
                visual_rows.append(v)
                audio_rows.append(a)
                labels.append(ci)
                splits.append(int(split))

    return FeatureArchive(
        dataset=spec.dataset,
        d_in_a=spec.d_in_a, d_in_v=spec.d_in_v,
        class_names=names, class_roles=roles,
        audio=np.asarray(audio_rows, dtype=np.float32),
        visual=np.asarray(visual_rows, dtype=np.float32),
        text_clip=np.asarray(text_clip, dtype=np.float32),
        text_clap=np.asarray(text_clap, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        splits=np.asarray(splits, dtype=np.uint8),
        extra={"synth_spec": spec.to_dict()},
    )
