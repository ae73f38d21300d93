"""Experiment orchestration: config files, arms, seeds, CSV artifacts.

Config files are line-oriented ``key = value`` with ``#`` comments. Every
key has a documented default, unknown keys are rejected, and range
violations name the offending key. One experiment runs a set of arms
(standard / josrc / ablations / small-loss baseline) over one or more
seeds, writes one metrics CSV per arm and seed, final checkpoints, and a
``summary.csv`` with the mean and population std of test accuracy over the
final ten epochs (across seeds when several are given).
"""

from __future__ import annotations

import concurrent.futures
import csv
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data, trainer
from .errors import ConfigError

ARM_MODES = {
    "standard": trainer.MODE_STANDARD,
    "josrc": trainer.MODE_FULL,
    "ablation-C": trainer.MODE_C,
    "ablation-CI": trainer.MODE_CI,
    "ablation-CIO": trainer.MODE_CIO,
    "smallloss-baseline": trainer.MODE_SMALL_LOSS,
}
SUMMARY_HEADER = ["arm", "n_seeds", "acc_mean", "acc_std", "status"]
FINAL_WINDOW = 10


@dataclass
class DataConfig:
    """Dataset source: either a CSV pair or the blob generator."""

    data_csv: str | None = None
    test_csv: str | None = None
    class_count: int = 10
    ood_class_count: int = 2
    open_set: bool = True
    per_class: int = 100
    test_per_class: int = 100
    dim: int = 8
    spread: float = 0.3
    noise_type: str = data.NOISE_SYMMETRY
    n_c: float = 0.2
    data_seed: int = 7

    def noise_spec(self) -> data.NoiseSpec:
        return data.NoiseSpec(self.noise_type, self.n_c, self.open_set, self.ood_class_count)

    def in_dist_classes(self) -> int:
        return self.class_count - (self.ood_class_count if self.open_set else 0)

    def overall_noise_ratio(self) -> float:
        if not self.open_set:
            return self.n_c
        ood_frac = self.ood_class_count / self.class_count
        return ood_frac + (1.0 - ood_frac) * self.n_c


@dataclass
class ExperimentSpec:
    run_name: str = "experiment"
    arms: tuple[str, ...] = ("josrc",)
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"
    selection_dump: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    train: trainer.TrainConfig = field(default_factory=trainer.TrainConfig)

    def __post_init__(self):
        if not self.arms:
            raise ConfigError("at least one arm is required")
        for arm in self.arms:
            if arm not in ARM_MODES:
                raise ConfigError(f"unknown arm {arm!r}; expected one of {sorted(ARM_MODES)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


def _parse_bool(value: str, key: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {value!r}")


def _parse_int_list(value: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in value.split(",") if v.strip())


_RANGE_CHECKS = {
    "n_c": (lambda v: 0.0 < v < 1.0, "(0,1)"),
    "tau_c": (lambda v: 0.0 < v < 1.0, "(0,1)"),
    "tau_m": (lambda v: 0.0 < v <= 1.0, "(0,1]"),
    "tau_ood": (lambda v: 0.0 < v < 1.0, "(0,1)"),
    "alpha": (lambda v: 0.0 <= v <= 1.0, "[0,1]"),
    "omega": (lambda v: 0.0 <= v <= 1.0, "[0,1]"),
    "epsilon": (lambda v: 0.0 <= v < 1.0, "[0,1)"),
    "rho_aug": (lambda v: 0.0 <= v < 1.0, "[0,1)"),
    "sigma_aug": (lambda v: v >= 0.0, "[0,inf)"),
    "delta_js": (lambda v: 0.0 < v < 1.0, "(0,1)"),
    "drop_rate": (lambda v: 0.0 <= v < 1.0, "[0,1)"),
    "s": (lambda v: v > 0.0, "(0,inf)"),
    "base_lr": (lambda v: v > 0.0, "(0,inf)"),
    "spread": (lambda v: v >= 0.0, "[0,inf)"),
}

_FLOAT_KEYS = set(_RANGE_CHECKS)
_INT_KEYS = {
    "t_max", "t_w", "batch_size", "decay_start_epoch", "seed", "checkpoint_every",
    "class_count", "ood_class_count", "per_class", "test_per_class", "dim", "data_seed",
}
_BOOL_KEYS = {"open_set", "use_view_average", "selection_dump"}
_STR_KEYS = {"run_name", "out_dir", "noise_type", "data_csv", "test_csv"}
_LIST_KEYS = {"arms", "seeds", "hidden_dims"}
KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS | _BOOL_KEYS | _STR_KEYS | _LIST_KEYS

_DATA_FIELDS = {f.name for f in fields(DataConfig)}
_TRAIN_FIELDS = {f.name for f in fields(trainer.TrainConfig)}


def parse_config(path) -> ExperimentSpec:
    """Parse a key = value config file into an ExperimentSpec with defaults."""
    raw: dict[str, str] = {}
    unknown: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key not in KNOWN_KEYS:
                unknown.append(key)
                continue
            raw[key] = value
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    values: dict[str, object] = {}
    for key, value in raw.items():
        try:
            if key in _FLOAT_KEYS:
                parsed: object = float(value)
            elif key in _INT_KEYS:
                parsed = int(value)
            elif key in _BOOL_KEYS:
                parsed = _parse_bool(value, key)
            elif key == "arms":
                parsed = tuple(a.strip() for a in value.split(",") if a.strip())
            elif key in ("seeds", "hidden_dims"):
                parsed = _parse_int_list(value)
            else:
                parsed = value
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"could not parse {key} = {value!r}: {exc}") from None
        if key in _RANGE_CHECKS:
            ok, desc = _RANGE_CHECKS[key]
            if not ok(parsed):
                raise ConfigError(f"{key} out of {desc}")
        values[key] = parsed

    if "noise_type" in values and values["noise_type"] not in (data.NOISE_SYMMETRY, data.NOISE_ASYMMETRY):
        raise ConfigError("noise_type must be 'symmetry' or 'asymmetry'")

    data_kwargs = {k: v for k, v in values.items() if k in _DATA_FIELDS}
    train_kwargs = {k: v for k, v in values.items() if k in _TRAIN_FIELDS}
    spec_kwargs: dict[str, object] = {}
    if "run_name" in values:
        spec_kwargs["run_name"] = values["run_name"]
    if "out_dir" in values:
        spec_kwargs["out_dir"] = values["out_dir"]
    if "arms" in values:
        spec_kwargs["arms"] = values["arms"]
    if "selection_dump" in values:
        spec_kwargs["selection_dump"] = values["selection_dump"]
    if "seeds" in values:
        spec_kwargs["seeds"] = values["seeds"]
    elif "seed" in values:
        spec_kwargs["seeds"] = (values["seed"],)

    try:
        spec = ExperimentSpec(
            data=DataConfig(**data_kwargs),
            train=trainer.TrainConfig(**train_kwargs),
            **spec_kwargs,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if (spec.data.data_csv is None) != (spec.data.test_csv is None):
        raise ConfigError("data_csv and test_csv must be given together")
    return spec


def materialize_data(cfg: DataConfig, seed: int) -> tuple[data.NoisyDataset, data.RawDataset]:
    """Build (noisy train set, clean test set) for one run seed.

    CSV sources are shared across seeds; generated data derives fresh blob
    and noise realizations from (data_seed, seed).
    """
    if cfg.data_csv is not None:
        train_ds = data.load_dataset_csv(cfg.data_csv)
        test_noisy = data.load_dataset_csv(cfg.test_csv)
        test_ds = data.RawDataset(
            test_noisy.features, test_noisy.true_labels, test_noisy.class_count, origin="csv"
        )
        return train_ds, test_ds
    base = cfg.data_seed * 1_000_003 + seed
    raw = data.make_blobs(cfg.class_count, cfg.per_class, cfg.dim, cfg.spread, seed=base)
    train_ds = data.apply_noise(raw, cfg.noise_spec(), seed=base + 1)
    c_id = cfg.in_dist_classes()
    test_ds = data.make_blobs(
        cfg.class_count, cfg.test_per_class, cfg.dim, cfg.spread,
        seed=base + 2, class_subset=list(range(c_id)),
    )
    return train_ds, test_ds


def final_window_accuracy(records: list[trainer.EpochRecord], window: int = FINAL_WINDOW) -> np.ndarray:
    accs = np.asarray([r.test_acc for r in records], dtype=np.float64)
    return accs[-window:] if len(accs) >= window else accs


def _run_one(spec: ExperimentSpec, arm: str, seed: int, out: Path) -> float:
    train_ds, test_ds = materialize_data(spec.data, seed)
    cfg = replace(spec.train, seed=seed)
    if arm == "smallloss-baseline" and cfg.drop_rate is None:
        cfg = replace(cfg, drop_rate=spec.data.overall_noise_ratio())
    dump = out / f"selection_{arm}_seed{seed}.csv" if (
        spec.selection_dump and ARM_MODES[arm] not in (trainer.MODE_STANDARD, trainer.MODE_SMALL_LOSS)
    ) else None
    result = trainer.run_training(
        train_ds, test_ds, cfg, mode=ARM_MODES[arm],
        metrics_path=out / f"metrics_{arm}_seed{seed}.csv",
        checkpoint_dir=str(out),
        checkpoint_prefix=f"{arm}_seed{seed}",
        selection_dump_path=dump,
    )
    return float(final_window_accuracy(result.records).mean())


def run_experiment(spec: ExperimentSpec) -> int:
    """Run all requested arms over all seeds; returns 0 iff every arm completed."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(arm, seed) for arm in spec.arms for seed in spec.seeds]

    results: dict[tuple[str, int], float] = {}
    errors: dict[str, str] = {}
    threads = int(os.environ.get("JOSRC_THREADS", "1") or "1")
    if threads > 1 and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_run_one, spec, arm, seed, out): (arm, seed) for arm, seed in jobs}
            for fut in concurrent.futures.as_completed(futures):
                arm, seed = futures[fut]
                try:
                    results[(arm, seed)] = fut.result()
                except Exception as exc:  # arm failures are recorded, not raised
                    errors[arm] = f"{type(exc).__name__}: {exc}"
    else:
        for arm, seed in jobs:
            try:
                results[(arm, seed)] = _run_one(spec, arm, seed, out)
            except Exception as exc:
                errors[arm] = f"{type(exc).__name__}: {exc}"

    with open(out / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for arm in spec.arms:
            if arm in errors:
                writer.writerow([arm, len(spec.seeds), "", "", "failed"])
                continue
            if len(spec.seeds) == 1:
                # single seed: mean/std over the final-epoch window itself
                mean, std = _window_stats(out, arm, spec.seeds[0])
            else:
                per_seed = [results[(arm, s)] for s in spec.seeds]
                mean = float(np.mean(per_seed))
                std = float(np.std(per_seed))
            writer.writerow([arm, len(spec.seeds), repr(mean), repr(std), "ok"])
    return 0 if not errors else 1


def _window_stats(out: Path, arm: str, seed: int) -> tuple[float, float]:
    """Mean and population std of test accuracy over the final window,
    read back from the metrics CSV written by the run."""
    path = out / f"metrics_{arm}_seed{seed}.csv"
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        accs = [float(row["test_acc"]) for row in reader]
    window = np.asarray(accs[-FINAL_WINDOW:] if len(accs) >= FINAL_WINDOW else accs)
    return float(window.mean()), float(window.std())
