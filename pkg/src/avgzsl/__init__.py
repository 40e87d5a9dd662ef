"""Audio-visual generalized zero-shot learning over precomputed
CLIP/CLAP embeddings: a small deterministic neural-network kit, the
two-branch alignment model, the GZSL evaluation protocol with calibrated
stacking, and a feature-archive format shared with the extraction client.
"""

from .data import (FeatureArchive, Split, Stage, StageView, SynthSpec,
                   batch_iterator, load_archive, stage_view, synth_generate,
                   write_archive)
from .evalkit import (CalibrationGrid, EvalReport, classify,
                      classify_calibrated, evaluate_gzsl, harmonic_mean,
                      mean_class_accuracy, pairwise_distances,
                      search_calibration)
from .model import (AblationSwitches, ModelDims, ModelParams, forward_batch,
                    init_params, load_checkpoint, save_checkpoint)
from .nn import Mode
from .objective import LossBreakdown, loss_total
from .trainer import (ProtocolConfig, StageOutcome, run_protocol,
                      train_stage1, train_stage2)

__version__ = "0.1.0"

__all__ = [
    "AblationSwitches", "CalibrationGrid", "EvalReport", "FeatureArchive",
    "LossBreakdown", "Mode", "ModelDims", "ModelParams", "ProtocolConfig",
    "Split", "Stage", "StageOutcome", "StageView", "SynthSpec",
    "batch_iterator", "classify", "classify_calibrated", "evaluate_gzsl",
    "forward_batch", "harmonic_mean", "init_params", "load_archive",
    "load_checkpoint", "loss_total", "mean_class_accuracy",
    "pairwise_distances", "run_protocol", "save_checkpoint",
    "search_calibration", "stage_view", "synth_generate", "train_stage1",
    "train_stage2", "write_archive",
]
