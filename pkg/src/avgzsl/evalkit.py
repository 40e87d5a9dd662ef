"""Nearest-class-embedding classification, calibrated stacking, and the
seen/unseen metric suite.

Prediction picks the class whose projected text embedding is closest in
Euclidean distance to the sample's audio-visual projection. Calibrated
stacking adds a scalar penalty to every seen-class distance before the
argmin, countering the trained bias toward seen classes; the penalty is
tuned by grid search on validation harmonic mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import model as _model
from .errors import ConfigError, DimensionError, ProtocolError
from .model import ClassTable, ModelParams
from .nn import Mode


# ---------------------------------------------------------------------------
# distances and classification


@dataclass
class DistanceTable:
    """Euclidean distances from each sample to each candidate class.

    Columns are ordered by ascending class id so that numpy's
    first-occurrence argmin realizes the documented tie rule (ties go to
    the lowest class index).
    """

    distances: np.ndarray  # (N, K) float64
    class_ids: np.ndarray  # (K,) int64, strictly increasing
    seen_mask: np.ndarray  # (K,) bool

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.seen_mask = np.asarray(self.seen_mask, dtype=bool)
        if self.distances.shape[1] != self.class_ids.shape[0]:
            raise DimensionError(
                f"distance table {self.distances.shape} vs "
                f"{self.class_ids.shape[0]} class ids")
        if self.seen_mask.shape != self.class_ids.shape:
            raise DimensionError("seen mask misaligned with class list")
        if np.any(np.diff(self.class_ids) <= 0):
            raise ConfigError("class_ids must be strictly increasing")


def pairwise_distances(theta_o: np.ndarray, theta_w: np.ndarray) -> np.ndarray:
    """Exact Euclidean distances, (N, K), computed in float64."""
    if theta_o.shape[1] != theta_w.shape[1]:
        raise DimensionError(
            f"embedding dims differ: {theta_o.shape} vs {theta_w.shape}")
    a = theta_o.astype(np.float64)
    b = theta_w.astype(np.float64)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def make_table(theta_o, theta_w, class_ids, seen_mask) -> DistanceTable:
    return DistanceTable(pairwise_distances(theta_o, theta_w),
                         np.asarray(class_ids), np.asarray(seen_mask))


def classify(table: DistanceTable, candidates: Iterable[int]) -> np.ndarray:
    """Argmin over the candidate classes; returns class ids per sample."""
    cand = np.asarray(sorted(set(int(c) for c in candidates)))
    if cand.size == 0:
        raise ConfigError("candidate set must be nonempty")
    col_of = {int(c): i for i, c in enumerate(table.class_ids)}
    missing = [int(c) for c in cand if int(c) not in col_of]
    if missing:
        raise ConfigError(f"candidates not in table: {missing}")
    cols = np.array([col_of[int(c)] for c in cand])
    sub = table.distances[:, cols]
    return cand[np.argmin(sub, axis=1)]


def classify_calibrated(table: DistanceTable, gamma: float) -> np.ndarray:
    """Argmin over all classes after adding `gamma` to seen-class distances."""
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    adjusted = table.distances + gamma * table.seen_mask
    return table.class_ids[np.argmin(adjusted, axis=1)]


# ---------------------------------------------------------------------------
# metrics


def mean_class_accuracy(predictions: np.ndarray, labels: np.ndarray,
                        class_set: Iterable[int]) -> float:
    """Unweighted mean over classes of per-class accuracy. Samples whose
    label is outside `class_set` are excluded; every class in the set must
    have at least one sample."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    accs = []
    for c in sorted(set(int(x) for x in class_set)):
        sel = labels == c
        if not sel.any():
            raise ProtocolError(f"class {c} has no samples to score")
        accs.append(float((predictions[sel] == c).mean()))
    if not accs:
        raise ProtocolError("empty class set")
    return float(np.mean(accs))


def harmonic_mean(acc_seen: float, acc_unseen: float) -> float:
    """2ab/(a+b), defined as 0 when both accuracies are 0."""
    if acc_seen < 0 or acc_unseen < 0:
        raise ConfigError("accuracies must be nonnegative")
    if acc_seen + acc_unseen == 0:
        return 0.0
    return 2.0 * acc_seen * acc_unseen / (acc_seen + acc_unseen)


@dataclass
class PerClassRow:
    class_id: int
    name: str
    seen: bool
    total: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "name": self.name,
                "seen": self.seen, "total": self.total,
                "correct": self.correct, "accuracy": self.accuracy}


@dataclass
class EvalReport:
    acc_seen: float
    acc_unseen: float
    hm: float
    acc_zsl: float
    gamma: float
    per_class: list = field(default_factory=list)

    @property
    def per_class_accuracy(self) -> dict:
        return {row.name: row.accuracy for row in self.per_class}

    def to_dict(self) -> dict:
        return {
            "acc_seen": self.acc_seen, "acc_unseen": self.acc_unseen,
            "hm": self.hm, "acc_zsl": self.acc_zsl, "gamma": self.gamma,
            "per_class": [row.to_dict() for row in self.per_class],
        }


def report_from_embeddings(theta_o: np.ndarray, labels: np.ndarray,
                           theta_w: np.ndarray, class_ids: Sequence[int],
                           seen_mask: Sequence[bool], gamma: float,
                           class_names: Optional[Sequence[str]] = None
                           ) -> EvalReport:
    """Full metric chain over precomputed embeddings.

    acc_seen/acc_unseen come from calibrated predictions over all
    candidate classes; acc_zsl restricts candidates to unseen classes and
    scores unseen samples only.
    """
    labels = np.asarray(labels)
    table = make_table(theta_o, theta_w, class_ids, seen_mask)
    seen_ids = set(int(c) for c in table.class_ids[table.seen_mask])
    unseen_ids = set(int(c) for c in table.class_ids[~table.seen_mask])
    sample_seen = np.isin(labels, sorted(seen_ids))
    if not sample_seen.any() or sample_seen.all():
        raise ProtocolError(
            "evaluation needs both seen-class and unseen-class samples "
            f"(got {int(sample_seen.sum())} seen of {labels.size})")

    preds = classify_calibrated(table, gamma)
    seen_classes_present = sorted(set(labels[sample_seen].tolist()))
    unseen_classes_present = sorted(set(labels[~sample_seen].tolist()))
    acc_seen = mean_class_accuracy(
        preds[sample_seen], labels[sample_seen], seen_classes_present)
    acc_unseen = mean_class_accuracy(
        preds[~sample_seen], labels[~sample_seen], unseen_classes_present)

    zsl_preds = classify(table, unseen_ids)
    acc_zsl = mean_class_accuracy(
        zsl_preds[~sample_seen], labels[~sample_seen],
        unseen_classes_present)

    rows = []
    for c in seen_classes_present + unseen_classes_present:
        sel = labels == c
        rows.append(PerClassRow(
            class_id=int(c),
            name=(class_names[int(c)] if class_names is not None
                  else str(int(c))),
            seen=int(c) in seen_ids,
            total=int(sel.sum()),
            correct=int((preds[sel] == c).sum()),
        ))
    rows.sort(key=lambda r: r.class_id)
    return EvalReport(
        acc_seen=acc_seen, acc_unseen=acc_unseen,
        hm=harmonic_mean(acc_seen, acc_unseen), acc_zsl=acc_zsl,
        gamma=float(gamma), per_class=rows,
    )


# ---------------------------------------------------------------------------
# calibration search


@dataclass(frozen=True)
class CalibrationGrid:
    """All multiples of `step` in [0, limit], endpoints inclusive at 0."""

    step: float = 0.07
    limit: float = 5.0

    def values(self) -> list:
        if self.step <= 0 or self.limit < 0:
            raise ConfigError("grid needs step > 0 and limit >= 0")
        n = int(math.floor(self.limit / self.step + 1e-9))
        return [i * self.step for i in range(n + 1)]


@dataclass
class CalibrationResult:
    gamma: float
    hm: float
    sweep: list  # [(gamma, hm)] over the whole grid


def _hm_at(table: DistanceTable, labels, gamma,
           seen_classes_present, unseen_classes_present,
           sample_seen) -> float:
    preds = classify_calibrated(table, gamma)
    acc_s = mean_class_accuracy(
        preds[sample_seen], labels[sample_seen], seen_classes_present)
    acc_u = mean_class_accuracy(
        preds[~sample_seen], labels[~sample_seen], unseen_classes_present)
    return harmonic_mean(acc_s, acc_u)


def search_calibration_from_embeddings(
        theta_o, labels, theta_w, class_ids, seen_mask,
        grid: CalibrationGrid = CalibrationGrid()) -> CalibrationResult:
    """Evaluate HM at every grid point over one shared distance table and
    return the maximizer; ties resolve toward the smaller gamma."""
    labels = np.asarray(labels)
    table = make_table(theta_o, theta_w, class_ids, seen_mask)
    seen_ids = set(int(c) for c in table.class_ids[table.seen_mask])
    sample_seen = np.isin(labels, sorted(seen_ids))
    if not sample_seen.any() or sample_seen.all():
        raise ProtocolError(
            "calibration search needs both seen and unseen samples")
    seen_present = sorted(set(labels[sample_seen].tolist()))
    unseen_present = sorted(set(labels[~sample_seen].tolist()))
    best_gamma, best_hm, sweep = 0.0, -1.0, []
    for gamma in grid.values():
        hm = _hm_at(table, labels, gamma, seen_present, unseen_present,
                    sample_seen)
        sweep.append((gamma, hm))
        if hm > best_hm:
            best_gamma, best_hm = gamma, hm
    return CalibrationResult(gamma=best_gamma, hm=best_hm, sweep=sweep)


# ---------------------------------------------------------------------------
# model-facing wrappers


def embed_samples(params: ModelParams, visual, audio) -> np.ndarray:
    """Eval-mode theta_o for a feature matrix pair (either may be None
    under single-modality ablation)."""
    o = _model.encode_audio_visual(visual, audio, params, Mode.EVAL)
    return _model.project_output(o, params, Mode.EVAL)


def embed_classes(params: ModelParams, table: ClassTable) -> np.ndarray:
    """Eval-mode theta_w for a class table."""
    sw = params.switches
    w = _model.encode_text(
        table.clip if sw.use_clip_text else None,
        table.clap if sw.use_clap_text else None,
        params, Mode.EVAL)
    return _model.project_text(w, params, Mode.EVAL)


def evaluate_gzsl(params: ModelParams, visual, audio, labels,
                  table: ClassTable, class_ids, seen_mask, gamma: float,
                  class_names=None) -> EvalReport:
    """Embed the eval samples and candidate classes, then run the metric
    chain at the given calibration."""
    theta_o = embed_samples(params, visual, audio)
    theta_w = embed_classes(params, table)
    return report_from_embeddings(theta_o, labels, theta_w, class_ids,
                                  seen_mask, gamma, class_names)


def search_calibration(params: ModelParams, visual, audio, labels,
                       table: ClassTable, class_ids, seen_mask,
                       grid: CalibrationGrid = CalibrationGrid()
                       ) -> CalibrationResult:
    theta_o = embed_samples(params, visual, audio)
    theta_w = embed_classes(params, table)
    return search_calibration_from_embeddings(
        theta_o, labels, theta_w, class_ids, seen_mask, grid)
