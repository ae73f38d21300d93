"""Training loop: view generation, partitioning, relabeling, warm-up gating.

Per iteration: augment the batch into two views, predict both with the
student, split the batch by the clean/ood criteria, build per-sample targets,
then update. Before the warm-up boundary only the clean subset contributes
(classification term only); from the warm-up epoch onward the configured mode
decides which subsets train and whether the consistency term is active. The
mean teacher is EMA-updated once per iteration regardless.

Modes double as the ablation grid: "C" trains on the clean subset only,
"CI" adds teacher-relabeled id samples, "CIO" adds flattened-teacher ood
samples, "full" adds the consistency term. "standard" treats every sample
as clean (no selection), and "small-loss" is the per-mini-batch baseline
selector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import data, nn, objective, relabel, selection
from .errors import InvalidInputError

MODE_STANDARD = "standard"
MODE_SMALL_LOSS = "small-loss"
MODE_C = "C"
MODE_CI = "CI"
MODE_CIO = "CIO"
MODE_FULL = "full"
ALL_MODES = (MODE_STANDARD, MODE_SMALL_LOSS, MODE_C, MODE_CI, MODE_CIO, MODE_FULL)

METRICS_HEADER = [
    "epoch", "lr", "tau_clean", "n_clean", "n_id", "n_ood",
    "prec_clean", "prec_id", "prec_ood", "loss_c", "loss_o", "loss_total", "test_acc",
]


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run (desk-scale defaults)."""

    t_max: int = 100
    t_w: int = 10
    batch_size: int = 64
    base_lr: float = 0.001
    decay_start_epoch: int = 40
    omega: float = 0.99
    epsilon: float = 0.6
    s: float = 10.0
    alpha: float = 0.4
    tau_c: float = 0.3
    tau_m: float = 0.95
    tau_ood: float = 0.5
    sigma_aug: float = 0.1
    rho_aug: float = 0.1
    delta_js: float = 1e-6
    seed: int = 0
    hidden_dims: tuple[int, ...] = (64, 64)
    use_view_average: bool = False
    drop_rate: float | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0 < self.t_w < self.t_max:
            raise InvalidInputError("need 0 < t_w < t_max")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be positive")
        if self.base_lr <= 0:
            raise InvalidInputError("base_lr must be positive")
        if not 1 <= self.decay_start_epoch < self.t_max:
            raise InvalidInputError("need 1 <= decay_start_epoch < t_max")
        if not 0.0 <= self.omega <= 1.0:
            raise InvalidInputError(f"omega out of [0,1]: {self.omega}")
        if not 0.0 <= self.epsilon < 1.0:
            raise InvalidInputError(f"epsilon out of [0,1): {self.epsilon}")
        if self.s <= 0:
            raise InvalidInputError(f"s must be positive: {self.s}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"alpha out of [0,1]: {self.alpha}")
        if not 0.0 < self.tau_c < 1.0:
            raise InvalidInputError(f"tau_c out of (0,1): {self.tau_c}")
        if not 0.0 < self.tau_m <= 1.0:
            raise InvalidInputError(f"tau_m out of (0,1]: {self.tau_m}")
        if self.tau_c >= self.tau_m:
            raise InvalidInputError("tau_c must be smaller than tau_m")
        if not 0.0 < self.tau_ood < 1.0:
            raise InvalidInputError(f"tau_ood out of (0,1): {self.tau_ood}")
        if self.sigma_aug < 0 or not 0.0 <= self.rho_aug < 1.0:
            raise InvalidInputError("sigma_aug must be >= 0 and rho_aug in [0,1)")
        if not 0.0 < self.delta_js < 1.0:
            raise InvalidInputError(f"delta_js out of (0,1): {self.delta_js}")
        if any(h < 1 for h in self.hidden_dims):
            raise InvalidInputError("hidden_dims must be positive")
        if self.drop_rate is not None and not 0.0 <= self.drop_rate < 1.0:
            raise InvalidInputError(f"drop_rate out of [0,1): {self.drop_rate}")
        if self.checkpoint_every < 0:
            raise InvalidInputError("checkpoint_every must be >= 0")


@dataclass
class EpochRecord:
    """Per-epoch metrics; precisions are None when a subset was never selected."""

    epoch: int
    lr: float
    tau_clean: float
    n_clean: int
    n_id: int
    n_ood: int
    prec_clean: float | None
    prec_id: float | None
    prec_ood: float | None
    loss_c: float
    loss_o: float
    loss_total: float
    test_acc: float
    skipped_batches: int = 0

    def csv_row(self) -> list:
        def fmt(x):
            return "" if x is None else repr(float(x))

        return [
            self.epoch, repr(float(self.lr)), repr(float(self.tau_clean)),
            self.n_clean, self.n_id, self.n_ood,
            fmt(self.prec_clean), fmt(self.prec_id), fmt(self.prec_ood),
            repr(float(self.loss_c)), repr(float(self.loss_o)), repr(float(self.loss_total)),
            repr(float(self.test_acc)),
        ]


@dataclass
class TrainResult:
    model: nn.MlpModel
    teacher: relabel.MeanTeacher
    records: list[EpochRecord] = field(default_factory=list)


def evaluate(model: nn.MlpModel, test_set: data.RawDataset) -> float:
    """Fraction of argmax-correct predictions on a clean test set."""
    if len(test_set) == 0:
        raise InvalidInputError("test set is empty")
    probs = nn.forward(model, test_set.features)
    return float(np.mean(np.argmax(probs, axis=1) == test_set.true_labels))


def selection_precision(
    clean_selected: np.ndarray,
    id_selected: np.ndarray,
    ood_selected: np.ndarray,
    provenance: np.ndarray,
) -> tuple[float | None, float | None, float | None]:
    """Per-subset precision of selected indices against provenance tags;
    None marks an empty selection."""

    def prec(idx, code):
        if len(idx) == 0:
            return None
        return float(np.mean(provenance[np.asarray(idx, dtype=np.int64)] == code))

    return (
        prec(clean_selected, data.PROVENANCE_CLEAN),
        prec(id_selected, data.PROVENANCE_ID),
        prec(ood_selected, data.PROVENANCE_OOD),
    )


def _per_sample_ce(P, Pp, targets):
    log_p = np.log(np.clip(P, objective.PROB_FLOOR, None))
    log_pp = np.log(np.clip(Pp, objective.PROB_FLOOR, None))
    return -(targets * log_p).sum(axis=1) - (targets * log_pp).sum(axis=1)


def run_training(
    dataset: data.NoisyDataset,
    test_set: data.RawDataset,
    config: TrainConfig,
    mode: str = MODE_FULL,
    metrics_path=None,
    checkpoint_dir=None,
    checkpoint_prefix: str = "model",
    selection_dump_path=None,
) -> TrainResult:
    """Run one training arm; deterministic for a fixed config and seed."""
    if mode not in ALL_MODES:
        raise InvalidInputError(f"unknown mode {mode!r}; expected one of {ALL_MODES}")
    if len(dataset) == 0:
        raise InvalidInputError("training dataset is empty")

    rng = np.random.default_rng(config.seed)
    n = len(dataset)
    dim = dataset.features.shape[1]
    c = dataset.class_count
    model = nn.init_model([dim, *config.hidden_dims, c], rng)
    teacher = relabel.MeanTeacher(nn.clone_model(model), config.omega)
    state = nn.init_optimizer(model, config.base_lr)
    sched = selection.ThresholdSchedule(config.tau_c, config.tau_m, config.t_w, config.t_max)
    uses_selection = mode not in (MODE_STANDARD, MODE_SMALL_LOSS)
    drop_rate = config.drop_rate if config.drop_rate is not None else 0.5

    metrics_fh = None
    metrics_writer = None
    if metrics_path is not None:
        metrics_fh = open(metrics_path, "w", encoding="utf-8", newline="\n")
        metrics_writer = csv.writer(metrics_fh, lineterminator="\n")
        metrics_writer.writerow(METRICS_HEADER)
    dump_fh = None
    dump_writer = None
    if selection_dump_path is not None:
        dump_fh = open(selection_dump_path, "w", encoding="utf-8", newline="\n")
        dump_writer = csv.writer(dump_fh, lineterminator="\n")
        dump_writer.writerow(["epoch", "idx", "p_clean", "p_ood", "assigned", "provenance"])

    records: list[EpochRecord] = []
    try:
        for t in range(1, config.t_max + 1):
            lr = nn.lr_schedule(t, config.t_max, config.decay_start_epoch, config.base_lr)
            state = replace(state, learning_rate=lr)
            tau_t = selection.dynamic_threshold(t, sched) if uses_selection else 0.0
            warmup = t < config.t_w

            perm = rng.permutation(n)
            clean_sel: list[np.ndarray] = []
            id_sel: list[np.ndarray] = []
            ood_sel: list[np.ndarray] = []
            batch_losses: list[objective.LossReport] = []
            skipped = 0

            for start in range(0, n, config.batch_size):
                batch_idx = perm[start : start + config.batch_size]
                X = dataset.features[batch_idx]
                given = dataset.given_labels[batch_idx]
                V, Vp = data.augment_batch(X, rng, config.sigma_aug, config.rho_aug)
                P = nn.forward(model, V)
                Pp = nn.forward(model, Vp)

                if mode == MODE_STANDARD:
                    part = selection.BatchPartition(
                        np.arange(len(batch_idx)), np.empty(0, np.int64), np.empty(0, np.int64)
                    )
                elif mode == MODE_SMALL_LOSS:
                    one_hot = relabel.smooth_labels(given, c, 0.0)
                    losses = _per_sample_ce(P, Pp, one_hot)
                    kept = selection.small_loss_select(losses, drop_rate)
                    # kept samples train; the rest are dropped, not relabeled
                    part = selection.BatchPartition(kept, np.empty(0, np.int64), np.empty(0, np.int64))
                else:
                    y_score = relabel.smooth_labels(given, c, config.delta_js)
                    part = selection.partition_batch(
                        P, Pp, y_score, tau_t, config.tau_ood, config.use_view_average
                    )

                if mode in (MODE_STANDARD, MODE_SMALL_LOSS):
                    # baselines train without label smoothing (plain CE on given labels)
                    targets = relabel.smooth_labels(given, c, 0.0)
                else:
                    targets = relabel.assign_targets(
                        X, given, part, teacher, config.epsilon, config.s
                    ).targets
                signs = np.ones(len(batch_idx))
                signs[part.ood_indices] = -1.0

                if warmup or mode in (MODE_STANDARD, MODE_SMALL_LOSS, MODE_C):
                    subset = part.clean_indices
                elif mode == MODE_CI:
                    subset = np.sort(np.concatenate([part.clean_indices, part.id_indices]))
                else:  # CIO and full train on the whole batch
                    subset = np.arange(len(batch_idx))
                alpha_eff = config.alpha if (mode == MODE_FULL and not warmup) else 0.0

                if len(subset) == 0:
                    skipped += 1
                else:
                    grads, report = nn.backward(
                        model, V[subset], Vp[subset], targets[subset], signs[subset], alpha_eff
                    )
                    model, state = nn.optimizer_step(model, state, grads)
                    batch_losses.append(report)
                teacher = relabel.ema_update(teacher, model)

                clean_sel.append(batch_idx[part.clean_indices])
                id_sel.append(batch_idx[part.id_indices])
                ood_sel.append(batch_idx[part.ood_indices])
                if dump_writer is not None and uses_selection:
                    scored = 0.5 * (P + Pp) if config.use_view_average else P
                    p_clean_rows = 1.0 - selection.js_divergence_rows(scored, y_score)
                    p_ood_rows = (np.argmax(P, axis=1) != np.argmax(Pp, axis=1)).astype(float)
                    assigned = np.empty(len(batch_idx), dtype=object)
                    assigned[part.clean_indices] = "clean"
                    assigned[part.id_indices] = "id"
                    assigned[part.ood_indices] = "ood"
                    for k, gi in enumerate(batch_idx):
                        dump_writer.writerow([
                            t, int(gi), repr(float(p_clean_rows[k])), repr(float(p_ood_rows[k])),
                            assigned[k], data.PROVENANCE_NAMES[int(dataset.provenance[gi])],
                        ])

            clean_all = np.concatenate(clean_sel) if clean_sel else np.empty(0, np.int64)
            id_all = np.concatenate(id_sel) if id_sel else np.empty(0, np.int64)
            ood_all = np.concatenate(ood_sel) if ood_sel else np.empty(0, np.int64)
            prec_clean, prec_id, prec_ood = selection_precision(
                clean_all, id_all, ood_all, dataset.provenance
            )
            if batch_losses:
                l_c = float(np.mean([r.l_c for r in batch_losses]))
                l_o = float(np.mean([r.l_o for r in batch_losses]))
                l_total = float(np.mean([r.l_total for r in batch_losses]))
            else:
                l_c = l_o = l_total = float("nan")
            record = EpochRecord(
                epoch=t, lr=lr, tau_clean=tau_t,
                n_clean=len(clean_all), n_id=len(id_all), n_ood=len(ood_all),
                prec_clean=prec_clean, prec_id=prec_id, prec_ood=prec_ood,
                loss_c=l_c, loss_o=l_o, loss_total=l_total,
                test_acc=evaluate(model, test_set),
                skipped_batches=skipped,
            )
            records.append(record)
            if metrics_writer is not None:
                metrics_writer.writerow(record.csv_row())
            if (
                checkpoint_dir is not None
                and config.checkpoint_every > 0
                and t % config.checkpoint_every == 0
            ):
                nn.save_checkpoint(model, f"{checkpoint_dir}/{checkpoint_prefix}_epoch{t:04d}.ckpt")
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
        if dump_fh is not None:
            dump_fh.close()

    if checkpoint_dir is not None:
        nn.save_checkpoint(model, f"{checkpoint_dir}/{checkpoint_prefix}.ckpt")
        nn.save_checkpoint(teacher.params, f"{checkpoint_dir}/{checkpoint_prefix}.ckpt.teacher")
    return TrainResult(model, teacher, records)


def train(
    dataset: data.NoisyDataset,
    test_set: data.RawDataset,
    config: TrainConfig,
    **io_kwargs,
) -> TrainResult:
    """The full method: selection, relabeling and the consistency term."""
    return run_training(dataset, test_set, config, mode=MODE_FULL, **io_kwargs)


def ablation_run(
    dataset: data.NoisyDataset,
    test_set: data.RawDataset,
    config: TrainConfig,
    mode: str,
    **io_kwargs,
) -> TrainResult:
    """Ablation arms: mode in {"C", "CI", "CIO", "Full"}."""
    mapping = {"C": MODE_C, "CI": MODE_CI, "CIO": MODE_CIO, "Full": MODE_FULL}
    if mode not in mapping:
        raise InvalidInputError(f"ablation mode must be one of {sorted(mapping)}, got {mode!r}")
    return run_training(dataset, test_set, config, mode=mapping[mode], **io_kwargs)


def post_training_clean_selection(
    result: TrainResult, dataset: data.NoisyDataset, config: TrainConfig
) -> tuple[np.ndarray, float | None]:
    """Score the trained model's clean selection over the whole training set.

    Uses the base threshold tau_c on unaugmented features (no view noise).
    Returns the selected indices and their precision against provenance.
    """
    probs = nn.forward(result.model, dataset.features)
    y_score = relabel.smooth_labels(dataset.given_labels, dataset.class_count, config.delta_js)
    p_clean = 1.0 - selection.js_divergence_rows(probs, y_score)
    selected = np.flatnonzero(p_clean > config.tau_c)
    if len(selected) == 0:
        return selected, None
    precision = float(np.mean(dataset.provenance[selected] == data.PROVENANCE_CLEAN))
    return selected, precision
