"""Two-stage training protocol.

Stage 1 trains on the Train split, runs the calibration grid search on the
validation split after every epoch, and selects the epoch and gamma with
the best validation harmonic mean (ties to the earliest epoch). Stage 2
re-initializes with the same seed and retrains on Train+ValS+ValU for
exactly the selected number of epochs, replaying stage 1's per-epoch
learning rates (stage 2 has no validation split to drive the scheduler);
the final report evaluates TestS+TestU at the frozen gamma.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import data, evalkit, model, nn, objective, report as report_mod
from .data import FeatureArchive, Stage, StageView
from .errors import ConfigError, DataError, NumericError, ProtocolError
from .evalkit import CalibrationGrid, EvalReport
from .model import AblationSwitches, Batch, ClassTable, ModelDims, ModelParams
from .nn import Mode

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ProtocolConfig:
    archive: str = ""
    dims: ModelDims = ModelDims()
    switches: AblationSwitches = AblationSwitches()
    lr: float = 1e-4
    epochs_stage1: int = 15
    batch_size: int = 64
    patience: int = 3
    lr_factor: float = 0.1
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    calibration: CalibrationGrid = CalibrationGrid()
    init_seed: int = 1
    shuffle_seed: int = 2
    dropout_seed: int = 3
    stop_rec_target_grad: bool = False
    stage2_init: str = "reinit"  # reinit | continue
    stage2_lr_mode: str = "replay"  # replay | fixed

    def __post_init__(self):
        if self.epochs_stage1 < 1:
            raise ConfigError("epochs_stage1 must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if self.stage2_init not in ("reinit", "continue"):
            raise ConfigError(
                f"stage2_init must be reinit/continue, got {self.stage2_init!r}")
        if self.stage2_lr_mode not in ("replay", "fixed"):
            raise ConfigError(
                f"stage2_lr_mode must be replay/fixed, got "
                f"{self.stage2_lr_mode!r}")

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "archive": self.archive,
            "dims": self.dims.to_dict(),
            "switches": self.switches.to_dict(),
            "lr": self.lr,
            "epochs_stage1": self.epochs_stage1,
            "batch_size": self.batch_size,
            "patience": self.patience,
            "lr_factor": self.lr_factor,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "calibration": {"step": self.calibration.step,
                            "limit": self.calibration.limit},
            "init_seed": self.init_seed,
            "shuffle_seed": self.shuffle_seed,
            "dropout_seed": self.dropout_seed,
            "stop_rec_target_grad": self.stop_rec_target_grad,
            "stage2_init": self.stage2_init,
            "stage2_lr_mode": self.stage2_lr_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolConfig":
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported config schema_version {version} "
                f"(expected {CONFIG_SCHEMA_VERSION})")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dims" in d:
            d["dims"] = ModelDims.from_dict(d["dims"])
        if "switches" in d:
            d["switches"] = AblationSwitches.from_dict(d["switches"])
        if "calibration" in d:
            d["calibration"] = CalibrationGrid(**d["calibration"])
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "ProtocolConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}")
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(payload)

    @classmethod
    def synthetic_defaults(cls, archive: str = "",
                           **overrides) -> "ProtocolConfig":
        """Tuning for the desk-scale synthetic task: a narrower model and a
        hotter learning rate than the full-size defaults (the task has 16
        classes and 1600 samples, so full width only slows it down)."""
        base = dict(
            archive=archive,
            dims=ModelDims(d_model=128, d_hidden=128),
            lr=1e-3,
            epochs_stage1=20,
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class StageOutcome:
    best_epoch: int  # 1-based count of epochs stage 2 will train
    best_gamma: float
    best_val_hm: float
    best_params: ModelParams
    lr_by_epoch: list
    log: list
    best_sweep: list = field(default_factory=list)
    best_checkpoint: Optional[Path] = None


# ---------------------------------------------------------------------------
# data plumbing


def gather_train_batch(archive: FeatureArchive, indices: np.ndarray,
                       switches: AblationSwitches):
    """Feature rows consumed by gradient updates. Kept separate from the
    evaluation gather so tests can instrument training data access."""
    return _gather(archive, indices, switches)


def gather_eval_features(archive: FeatureArchive, indices: np.ndarray,
                         switches: AblationSwitches):
    return _gather(archive, indices, switches)


def _gather(archive, indices, switches):
    v = archive.visual[indices] if switches.use_visual else None
    a = archive.audio[indices] if switches.use_audio else None
    return v, a


def class_table(archive: FeatureArchive, class_ids: np.ndarray,
                switches: AblationSwitches) -> ClassTable:
    clip = archive.text_clip[class_ids] if switches.use_clip_text else None
    clap = archive.text_clap[class_ids] if switches.use_clap_text else None
    return ClassTable(clip=clip, clap=clap)


def _row_mapping(num_classes: int, class_ids: np.ndarray) -> np.ndarray:
    row_of = np.full(num_classes, -1, dtype=np.int64)
    row_of[class_ids] = np.arange(class_ids.shape[0])
    return row_of


def eval_candidates(view: StageView):
    ids = np.sort(np.concatenate([view.seen_classes, view.unseen_classes]))
    mask = np.isin(ids, view.seen_classes)
    return ids, mask


# ---------------------------------------------------------------------------
# training loops


def _train_one_epoch(params: ModelParams, pdict: dict, adam: nn.AdamState,
                     archive: FeatureArchive, train_indices: np.ndarray,
                     row_of: np.ndarray, table: ClassTable,
                     config: ProtocolConfig, drop_rng, epoch: int,
                     stage_name: str) -> dict:
    sums = {"l_ce": 0.0, "l_rec": 0.0, "l_reg": 0.0, "l_total": 0.0}
    batches = 0
    for batch_idx in data.batch_iterator(
            train_indices, config.batch_size, config.shuffle_seed, epoch):
        v, a = gather_train_batch(archive, batch_idx, config.switches)
        rows = row_of[archive.labels[batch_idx]]
        if (rows < 0).any():
            raise DataError(
                f"{stage_name} epoch {epoch}: batch contains labels outside "
                f"the stage's seen-class set")
        trace = model.forward_batch(Batch(v, a, rows), table, params,
                                    Mode.TRAIN, drop_rng)
        breakdown, tg = objective.loss_total(
            trace, config.switches.loss_terms, config.stop_rec_target_grad)
        if not math.isfinite(breakdown.l_total):
            raise NumericError(
                f"non-finite loss at {stage_name} epoch {epoch} batch "
                f"{batches}: {breakdown.to_dict()}")
        grads = model.backward_batch(trace, tg, params)
        try:
            nn.adam_step(pdict, grads, adam)
        except NumericError as exc:
            raise NumericError(f"{stage_name} epoch {epoch}: {exc}") from exc
        for key, value in breakdown.to_dict().items():
            sums[key] += value
        batches += 1
    if batches == 0:
        raise ProtocolError(
            f"{stage_name}: training set too small for batch_size="
            f"{config.batch_size}")
    return {key: value / batches for key, value in sums.items()}


def train_stage1(config: ProtocolConfig, archive: FeatureArchive,
                 work_dir: Optional[Path] = None,
                 progress: Optional[Callable[[dict], None]] = None
                 ) -> StageOutcome:
    view = data.stage_view(archive, Stage.ONE)
    if view.train_indices.size == 0:
        raise ProtocolError("stage 1: empty training split")
    if view.eval_seen_indices.size == 0 or view.eval_unseen_indices.size == 0:
        raise ProtocolError("stage 1: validation needs ValS and ValU samples")

    train_table = class_table(archive, view.seen_classes, config.switches)
    row_of = _row_mapping(archive.num_classes, view.seen_classes)
    eval_ids, eval_mask = eval_candidates(view)
    eval_table = class_table(archive, eval_ids, config.switches)
    val_idx = np.concatenate([view.eval_seen_indices,
                              view.eval_unseen_indices])
    val_v, val_a = gather_eval_features(archive, val_idx, config.switches)
    val_labels = archive.labels[val_idx]

    params = model.init_params(config.dims, config.switches, config.init_seed)
    pdict = params.parameters()
    adam = nn.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                        weight_decay=config.weight_decay)
    sched = nn.PlateauScheduler(config.lr, patience=config.patience,
                                factor=config.lr_factor)
    drop_rng = np.random.default_rng(config.dropout_seed)

    ckpt_dir = None
    if work_dir is not None:
        ckpt_dir = Path(work_dir) / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    log = []
    lr_by_epoch = []
    best = None  # (hm, epoch, gamma, params, sweep)
    for epoch in range(config.epochs_stage1):
        lr = sched.lr
        adam.lr = lr
        lr_by_epoch.append(lr)
        means = _train_one_epoch(params, pdict, adam, archive,
                                 view.train_indices, row_of, train_table,
                                 config, drop_rng, epoch, "stage 1")
        cal = evalkit.search_calibration(
            params, val_v, val_a, val_labels, eval_table, eval_ids,
            eval_mask, config.calibration)
        val_report = evalkit.evaluate_gzsl(
            params, val_v, val_a, val_labels, eval_table, eval_ids,
            eval_mask, cal.gamma, archive.class_names)
        sched.step(cal.hm)
        entry = {
            "stage": 1, "epoch": epoch, "lr": float(lr),
            **{k: float(v) for k, v in means.items()},
            "val_hm": float(cal.hm), "val_gamma": float(cal.gamma),
            "val_acc_seen": float(val_report.acc_seen),
            "val_acc_unseen": float(val_report.acc_unseen),
        }
        log.append(entry)
        if progress is not None:
            progress(entry)
        if ckpt_dir is not None:
            model.save_checkpoint(params, ckpt_dir / f"epoch_{epoch:03d}.ckpt")
        if best is None or cal.hm > best[0]:
            best = (cal.hm, epoch, cal.gamma, params.clone(), cal.sweep)

    best_hm, best_epoch, best_gamma, best_params, best_sweep = best
    best_ckpt = None
    if ckpt_dir is not None:
        best_ckpt = Path(work_dir) / "stage1_best.ckpt"
        model.save_checkpoint(best_params, best_ckpt)
        for f in ckpt_dir.glob("epoch_*.ckpt"):
            f.unlink()
        ckpt_dir.rmdir()
    return StageOutcome(
        best_epoch=best_epoch + 1, best_gamma=best_gamma,
        best_val_hm=best_hm, best_params=best_params,
        lr_by_epoch=lr_by_epoch, log=log, best_sweep=best_sweep,
        best_checkpoint=best_ckpt)


def train_stage2(config: ProtocolConfig, outcome: StageOutcome,
                 archive: FeatureArchive,
                 progress: Optional[Callable[[dict], None]] = None):
    """Returns (final_params, log). Trains on Train+ValS+ValU for exactly
    outcome.best_epoch epochs with stage 1's learning-rate sequence."""
    view = data.stage_view(archive, Stage.TWO)
    if view.train_indices.size == 0:
        raise ProtocolError("stage 2: empty training split")
    train_table = class_table(archive, view.seen_classes, config.switches)
    row_of = _row_mapping(archive.num_classes, view.seen_classes)

    if config.stage2_init == "reinit":
        params = model.init_params(config.dims, config.switches,
                                   config.init_seed)
    else:
        params = outcome.best_params.clone()
    pdict = params.parameters()
    adam = nn.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                        weight_decay=config.weight_decay)
    drop_rng = np.random.default_rng(config.dropout_seed)

    log = []
    for epoch in range(outcome.best_epoch):
        if config.stage2_lr_mode == "replay":
            lr = outcome.lr_by_epoch[epoch]
        else:
            lr = config.lr
        adam.lr = lr
        means = _train_one_epoch(params, pdict, adam, archive,
                                 view.train_indices, row_of, train_table,
                                 config, drop_rng, epoch, "stage 2")
        entry = {"stage": 2, "epoch": epoch, "lr": float(lr),
                 **{k: float(v) for k, v in means.items()}}
        log.append(entry)
        if progress is not None:
            progress(entry)
    return params, log


def evaluate_split(params: ModelParams, archive: FeatureArchive,
                   stage: Stage, gamma: float) -> EvalReport:
    """Evaluate a checkpoint on a stage's eval split at a fixed gamma."""
    view = data.stage_view(archive, stage)
    eval_ids, eval_mask = eval_candidates(view)
    table = class_table(archive, eval_ids, params.switches)
    idx = np.concatenate([view.eval_seen_indices, view.eval_unseen_indices])
    if view.eval_seen_indices.size == 0 or view.eval_unseen_indices.size == 0:
        raise ProtocolError(f"{stage}: empty evaluation split")
    v, a = gather_eval_features(archive, idx, params.switches)
    return evalkit.evaluate_gzsl(params, v, a, archive.labels[idx], table,
                                 eval_ids, eval_mask, gamma,
                                 archive.class_names)


def run_protocol(config: ProtocolConfig, out_dir=None,
                 progress: Optional[Callable[[dict], None]] = None
                 ) -> EvalReport:
    """Stage 1, stage 2, final test evaluation; optionally write the report
    bundle (JSON + CSV + JSONL logs + figures + final checkpoint) to
    `out_dir`. The report JSON is written atomically and last, so a failed
    run leaves no partial report behind.
    """
    archive = data.load_archive(config.archive)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    outcome = train_stage1(config, archive, work_dir=out, progress=progress)
    final_params, stage2_log = train_stage2(config, outcome, archive,
                                            progress=progress)
    report = evaluate_split(final_params, archive, Stage.TWO,
                            outcome.best_gamma)

    if out is not None:
        report_mod.write_jsonl(outcome.log, out / "stage1_log.jsonl")
        report_mod.write_jsonl(stage2_log, out / "stage2_log.jsonl")
        model.save_checkpoint(final_params, out / "checkpoint_final.ckpt")
        report_mod.write_per_class_csv(report, out / "per_class_accuracy.csv")
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        report_mod.plot_training_curves(
            outcome.log, stage2_log, fig_dir / "training_curves.png")
        report_mod.plot_calibration_sweep(
            outcome.best_sweep, outcome.best_gamma,
            fig_dir / "calibration_sweep.png")
        payload = {
            "schema_version": 1,
            "dataset": archive.dataset,
            "config": config.to_dict(),
            "best_epoch": outcome.best_epoch,
            "best_val_hm": float(outcome.best_val_hm),
            **report.to_dict(),
        }
        report_mod.write_report_json(payload, out / "report.json")
    return report
