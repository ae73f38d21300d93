"""Noise-robust classifier training on synthetic noisy datasets.

Clean samples are selected globally by thresholding 1 minus the bounded
Jensen-Shannon divergence between prediction and given label; the remaining
samples are split into in-distribution and out-of-distribution noise by the
prediction agreement of two augmented views, relabeled by a mean-teacher
model, and trained under a joint classification + consistency objective.
"""

from .data import (
    NoiseSpec,
    NoisyDataset,
    RawDataset,
    ViewPair,
    apply_noise,
    augment,
    corrupt_asymmetric,
    corrupt_symmetric,
    make_blobs,
    make_open_set,
)
from .errors import ConfigError, InvalidInputError, NumericFailureError
from .experiment import DataConfig, ExperimentSpec, parse_config, run_experiment
from .nn import (
    Gradients,
    MlpModel,
    OptimizerState,
    backward,
    forward,
    init_model,
    init_optimizer,
    load_checkpoint,
    lr_schedule,
    optimizer_step,
    save_checkpoint,
)
from .objective import LossReport, classification_loss, consistency_loss, joint_loss
from .relabel import (
    MeanTeacher,
    TargetAssignment,
    assign_targets,
    ema_update,
    smooth_label,
    teacher_label_id,
    teacher_label_ood,
)
from .selection import (
    BatchPartition,
    CleanScore,
    OodScore,
    ThresholdSchedule,
    clean_likelihood,
    dynamic_threshold,
    js_divergence,
    ood_likelihood,
    partition_batch,
    small_loss_select,
)
from .trainer import (
    EpochRecord,
    TrainConfig,
    TrainResult,
    ablation_run,
    evaluate,
    run_training,
    selection_precision,
    train,
)

__version__ = "0.1.0"
