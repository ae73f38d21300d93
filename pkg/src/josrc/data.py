"""Synthetic datasets, label-noise injection and two-view augmentation.

Gaussian blobs stand in for image data. Noise is injected two ways:
closed-set corruption (symmetric resampling or circular next-class flips)
and an open-set construction where the last few classes are treated as
out-of-distribution and receive random in-distribution labels, so the
overall noise ratio is ood_fraction + (1 - ood_fraction) * n_c.

Provenance tags (clean / id / ood) ride along for evaluation only; training
code never reads them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

PROVENANCE_CLEAN = 0
PROVENANCE_ID = 1
PROVENANCE_OOD = 2
PROVENANCE_NAMES = {PROVENANCE_CLEAN: "clean", PROVENANCE_ID: "id", PROVENANCE_OOD: "ood"}
PROVENANCE_CODES = {v: k for k, v in PROVENANCE_NAMES.items()}

NOISE_SYMMETRY = "symmetry"
NOISE_ASYMMETRY = "asymmetry"


@dataclass
class RawDataset:
    """Uncorrupted samples: features, true labels, and the generator seed."""

    features: np.ndarray
    true_labels: np.ndarray
    class_count: int
    origin: str = "blobs"
    seed: int | None = None

    def __post_init__(self):
        if len(self.features) == 0 or self.features.ndim != 2:
            raise InvalidInputError("features must be a non-empty N x D matrix")
        if len(self.true_labels) != len(self.features):
            raise InvalidInputError("labels and features must have equal length")
        if self.true_labels.min() < 0 or self.true_labels.max() >= self.class_count:
            raise InvalidInputError("labels must lie in [0, class_count)")

    def __len__(self) -> int:
        return len(self.features)


@dataclass
class NoiseSpec:
    """How labels get corrupted."""

    noise_type: str = NOISE_SYMMETRY
    closed_set_ratio: float = 0.2
    open_set: bool = True
    ood_class_count: int = 2

    def __post_init__(self):
        if self.noise_type not in (NOISE_SYMMETRY, NOISE_ASYMMETRY):
            raise InvalidInputError(f"noise_type must be symmetry or asymmetry, got {self.noise_type!r}")
        if not 0.0 < self.closed_set_ratio < 1.0:
            raise InvalidInputError(f"n_c out of (0,1): {self.closed_set_ratio}")
        if self.open_set and self.ood_class_count < 1:
            raise InvalidInputError("open_set requires ood_class_count >= 1")


@dataclass
class NoisyDataset:
    """Samples with possibly corrupted labels.

    ``given_labels`` lie in [0, class_count) where class_count is the
    in-distribution class count. ``true_labels`` keep the original class
    index (OOD samples keep their out-of-range class) and, with
    ``provenance``, exist for evaluation only.
    """

    features: np.ndarray
    given_labels: np.ndarray
    true_labels: np.ndarray
    provenance: np.ndarray
    class_count: int

    def __post_init__(self):
        n = len(self.features)
        if not (len(self.given_labels) == len(self.true_labels) == len(self.provenance) == n):
            raise InvalidInputError("all per-sample arrays must have equal length")
        if len(self.given_labels) and (
            self.given_labels.min() < 0 or self.given_labels.max() >= self.class_count
        ):
            raise InvalidInputError("given labels must lie in [0, class_count)")

    def __len__(self) -> int:
        return len(self.features)


@dataclass
class ViewPair:
    """Two stochastic augmentations of one sample."""

    v: np.ndarray
    v_prime: np.ndarray
    source_index: int = 0


def blob_means(class_count: int, dim: int) -> np.ndarray:
    """Class means on a circle scaled so adjacent means sit 2.0 apart."""
    if class_count < 1 or dim < 1:
        raise InvalidInputError("class_count and dim must be positive")
    means = np.zeros((class_count, dim))
    if class_count == 1:
        return means
    if dim == 1:
        means[:, 0] = 2.0 * np.arange(class_count) - (class_count - 1)
        return means
    radius = 1.0 / np.sin(np.pi / class_count)
    angles = 2.0 * np.pi * np.arange(class_count) / class_count
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def make_blobs(
    class_count: int,
    per_class: int,
    dim: int,
    spread: float,
    seed: int,
    class_subset: list[int] | None = None,
) -> RawDataset:
    """Isotropic Gaussian blobs around circle-placed class means.

    ``class_subset`` restricts sampling to the listed classes while keeping
    the mean geometry of the full ``class_count`` layout (used for test sets
    that cover in-distribution classes only).
    """
    if class_count <= 0 or per_class <= 0 or dim <= 0:
        raise InvalidInputError("class_count, per_class and dim must be positive")
    if spread < 0:
        raise InvalidInputError("spread must be non-negative")
    classes = list(range(class_count)) if class_subset is None else list(class_subset)
    means = blob_means(class_count, dim)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.asarray(classes, dtype=np.int64), per_class)
    features = means[labels] + rng.normal(0.0, spread, size=(len(labels), dim))
    effective_c = class_count if class_subset is None else max(classes) + 1
    return RawDataset(features, labels, effective_c, origin="blobs", seed=seed)


def _rounded_count(ratio: float, n: int) -> int:
    return int(np.rint(ratio * n))


def _resample_other(rng: np.random.Generator, true_labels: np.ndarray, class_count: int) -> np.ndarray:
    # Uniform over the other C-1 classes: draw in [0, C-1) and skip the true class.
    draw = rng.integers(0, class_count - 1, size=len(true_labels))
    return draw + (draw >= true_labels)


def corrupt_symmetric(dataset: RawDataset, n_c: float, seed: int) -> NoisyDataset:
    """Resample round(n_c*N) uniformly chosen labels over the other classes."""
    if not 0.0 < n_c < 1.0:
        raise InvalidInputError(f"n_c out of (0,1): {n_c}")
    rng = np.random.default_rng(seed)
    n = len(dataset)
    chosen = rng.permutation(n)[: _rounded_count(n_c, n)]
    given = dataset.true_labels.copy()
    given[chosen] = _resample_other(rng, dataset.true_labels[chosen], dataset.class_count)
    provenance = np.full(n, PROVENANCE_CLEAN, dtype=np.int8)
    provenance[chosen] = PROVENANCE_ID
    return NoisyDataset(dataset.features.copy(), given, dataset.true_labels.copy(),
                        provenance, dataset.class_count)


def corrupt_asymmetric(dataset: RawDataset, n_c: float, seed: int) -> NoisyDataset:
    """Flip round(n_c*N) uniformly chosen labels to the circular next class."""
    if not 0.0 < n_c < 1.0:
        raise InvalidInputError(f"n_c out of (0,1): {n_c}")
    rng = np.random.default_rng(seed)
    n = len(dataset)
    chosen = rng.permutation(n)[: _rounded_count(n_c, n)]
    given = dataset.true_labels.copy()
    given[chosen] = (dataset.true_labels[chosen] + 1) % dataset.class_count
    provenance = np.full(n, PROVENANCE_CLEAN, dtype=np.int8)
    provenance[chosen] = PROVENANCE_ID
    return NoisyDataset(dataset.features.copy(), given, dataset.true_labels.copy(),
                        provenance, dataset.class_count)


def make_open_set(raw: RawDataset, spec: NoiseSpec, seed: int) -> NoisyDataset:
    """Open-set construction: the last ood_class_count classes become OOD.

    OOD samples get uniform random in-distribution labels; the remaining
    samples undergo closed-set corruption at ratio n_c over the
    in-distribution classes.
    """
    if not spec.open_set:
        raise InvalidInputError("make_open_set requires an open-set NoiseSpec")
    if spec.ood_class_count >= raw.class_count:
        raise InvalidInputError("ood_class_count must be smaller than the total class count")
    c_id = raw.class_count - spec.ood_class_count
    rng = np.random.default_rng(seed)
    n = len(raw)
    given = raw.true_labels.copy()
    provenance = np.full(n, PROVENANCE_CLEAN, dtype=np.int8)

    is_ood = raw.true_labels >= c_id
    given[is_ood] = rng.integers(0, c_id, size=int(is_ood.sum()))
    provenance[is_ood] = PROVENANCE_OOD

    id_idx = np.flatnonzero(~is_ood)
    chosen = id_idx[rng.permutation(len(id_idx))[: _rounded_count(spec.closed_set_ratio, len(id_idx))]]
    if spec.noise_type == NOISE_SYMMETRY:
        given[chosen] = _resample_other(rng, raw.true_labels[chosen], c_id)
    else:
        given[chosen] = (raw.true_labels[chosen] + 1) % c_id
    provenance[chosen] = PROVENANCE_ID
    return NoisyDataset(raw.features.copy(), given, raw.true_labels.copy(), provenance, c_id)


def apply_noise(raw: RawDataset, spec: NoiseSpec, seed: int) -> NoisyDataset:
    """Dispatch to the open-set construction or plain closed-set corruption."""
    if spec.open_set:
        return make_open_set(raw, spec, seed)
    if spec.noise_type == NOISE_SYMMETRY:
        return corrupt_symmetric(raw, spec.closed_set_ratio, seed)
    return corrupt_asymmetric(raw, spec.closed_set_ratio, seed)


def _one_view(x: np.ndarray, rng: np.random.Generator, sigma_aug: float, rho_aug: float) -> np.ndarray:
    noise = rng.normal(0.0, sigma_aug, size=x.shape)
    keep = rng.random(size=x.shape) >= rho_aug
    return (x + noise) * keep


def augment(
    x: np.ndarray,
    rng: np.random.Generator,
    sigma_aug: float = 0.1,
    rho_aug: float = 0.1,
    source_index: int = 0,
) -> ViewPair:
    """Two independent views: Gaussian jitter then coordinate dropout.

    Each view has expectation (1 - rho_aug) * x.
    """
    if sigma_aug < 0 or not 0.0 <= rho_aug < 1.0:
        raise InvalidInputError("sigma_aug must be >= 0 and rho_aug in [0, 1)")
    x = np.asarray(x, dtype=np.float64)
    return ViewPair(
        _one_view(x, rng, sigma_aug, rho_aug),
        _one_view(x, rng, sigma_aug, rho_aug),
        source_index,
    )


def augment_batch(
    X: np.ndarray, rng: np.random.Generator, sigma_aug: float, rho_aug: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized two-view augmentation of a (B, D) feature matrix."""
    v = _one_view(X, rng, sigma_aug, rho_aug)
    v_prime = _one_view(X, rng, sigma_aug, rho_aug)
    return v, v_prime


def save_dataset_csv(dataset: NoisyDataset, path) -> None:
    """CSV interchange: idx,feat_0..feat_{D-1},given_label,true_label,provenance."""
    dim = dataset.features.shape[1]
    header = ["idx"] + [f"feat_{j}" for j in range(dim)] + ["given_label", "true_label", "provenance"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [i]
            row.extend(repr(float(v)) for v in dataset.features[i])
            row.append(int(dataset.given_labels[i]))
            row.append(int(dataset.true_labels[i]))
            row.append(PROVENANCE_NAMES[int(dataset.provenance[i])])
            writer.writerow(row)


def load_dataset_csv(path) -> NoisyDataset:
    """Inverse of save_dataset_csv; the in-distribution class count is inferred
    from the labels present."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        feat_cols = [c for c in header if c.startswith("feat_")]
        dim = len(feat_cols)
        want = ["idx"] + [f"feat_{j}" for j in range(dim)] + ["given_label", "true_label", "provenance"]
        if header != want:
            raise InvalidInputError(f"unexpected dataset CSV header {header}")
        feats, given, true, prov = [], [], [], []
        for row in reader:
            feats.append([float(v) for v in row[1 : 1 + dim]])
            given.append(int(row[1 + dim]))
            true.append(int(row[2 + dim]))
            if row[3 + dim] not in PROVENANCE_CODES:
                raise InvalidInputError(f"unknown provenance {row[3 + dim]!r}")
            prov.append(PROVENANCE_CODES[row[3 + dim]])
    features = np.asarray(feats, dtype=np.float64)
    given_arr = np.asarray(given, dtype=np.int64)
    true_arr = np.asarray(true, dtype=np.int64)
    prov_arr = np.asarray(prov, dtype=np.int8)
    in_dist = true_arr[prov_arr != PROVENANCE_OOD]
    c = int(max(given_arr.max(), in_dist.max() if len(in_dist) else 0)) + 1
    return NoisyDataset(features, given_arr, true_arr, prov_arr, c)
