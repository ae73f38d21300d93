"""Target label distributions per subset, and the mean-teacher model.

Clean samples keep their given label under smoothing; id-noisy samples take
the teacher's softmax on the unaugmented sample as a soft pseudo-label; ood
samples take the teacher's probabilities flattened through a high-temperature
softmax (dividing probabilities, which span at most [0, 1], by s = 10 leaves
every exponent within 0.1 of its neighbours, so the result is near-uniform).
The teacher itself is an exponential moving average of the student and never
receives gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import InvalidInputError
from .selection import BatchPartition

ORIGIN_SMOOTHED_GIVEN = "smoothed_given"
ORIGIN_TEACHER_ID = "teacher_id"
ORIGIN_TEACHER_OOD = "teacher_ood_flattened"


@dataclass
class MeanTeacher:
    """EMA copy of the student; ``decay`` is the EMA retention factor."""

    params: nn.MlpModel
    decay: float

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise InvalidInputError(f"decay out of [0,1]: {self.decay}")


@dataclass
class TargetAssignment:
    """Per-sample target distributions with their origin tags."""

    targets: np.ndarray
    origins: list[str]


def smooth_label(label: int, class_count: int, epsilon: float) -> np.ndarray:
    """Mass 1-epsilon on the label, epsilon/(C-1) on every other class."""
    if class_count < 2:
        raise InvalidInputError(f"class_count must be >= 2, got {class_count}")
    if not 0 <= label < class_count:
        raise InvalidInputError(f"label {label} outside [0, {class_count})")
    if not 0.0 <= epsilon < 1.0:
        raise InvalidInputError(f"epsilon out of [0,1): {epsilon}")
    out = np.full(class_count, epsilon / (class_count - 1))
    out[label] = 1.0 - epsilon
    return out


def smooth_labels(labels: np.ndarray, class_count: int, epsilon: float) -> np.ndarray:
    """Vectorized smooth_label over a label vector; returns (B, C)."""
    if class_count < 2:
        raise InvalidInputError(f"class_count must be >= 2, got {class_count}")
    if not 0.0 <= epsilon < 1.0:
        raise InvalidInputError(f"epsilon out of [0,1): {epsilon}")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) and (labels.min() < 0 or labels.max() >= class_count):
        raise InvalidInputError("labels outside [0, class_count)")
    out = np.full((len(labels), class_count), epsilon / (class_count - 1))
    out[np.arange(len(labels)), labels] = 1.0 - epsilon
    return out


def teacher_label_id(x: np.ndarray, teacher: MeanTeacher) -> np.ndarray:
    """Teacher softmax on the unaugmented sample (or batch)."""
    return nn.forward(teacher.params, x)


def flatten_probs(probs: np.ndarray, s: float) -> np.ndarray:
    """Softmax of probabilities divided by s; approaches uniform as s grows."""
    if s <= 0:
        raise InvalidInputError(f"s must be positive, got {s}")
    z = np.asarray(probs, dtype=np.float64) / s
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def teacher_label_ood(x: np.ndarray, teacher: MeanTeacher, s: float) -> np.ndarray:
    """Flattened teacher pseudo-label for an out-of-distribution sample."""
    return flatten_probs(nn.forward(teacher.params, x), s)


def ema_update(teacher: MeanTeacher, student: nn.MlpModel) -> MeanTeacher:
    """theta_mt <- decay * theta_mt + (1 - decay) * theta, elementwise."""
    if teacher.params.layer_dims != student.layer_dims:
        raise InvalidInputError("teacher and student layer dims differ")
    w = teacher.decay
    new_weights = [w * tw + (1.0 - w) * sw for tw, sw in zip(teacher.params.weights, student.weights)]
    new_biases = [w * tb + (1.0 - w) * sb for tb, sb in zip(teacher.params.biases, student.biases)]
    return MeanTeacher(
        nn.MlpModel(list(student.layer_dims), new_weights, new_biases, student.activation),
        teacher.decay,
    )


def assign_targets(
    features: np.ndarray,
    given_labels: np.ndarray,
    partition: BatchPartition,
    teacher: MeanTeacher,
    epsilon: float,
    s: float,
) -> TargetAssignment:
    """Route each target by subset: clean -> smoothed given label,
    id -> teacher pseudo-label, ood -> flattened teacher pseudo-label."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    given_labels = np.asarray(given_labels, dtype=np.int64)
    batch = len(features)
    if partition.size() != batch:
        raise InvalidInputError("partition does not cover the batch")
    class_count = teacher.params.class_count
    targets = np.empty((batch, class_count))
    origins: list[str] = [""] * batch

    clean = partition.clean_indices
    if len(clean):
        targets[clean] = smooth_labels(given_labels[clean], class_count, epsilon)
        for i in clean:
            origins[i] = ORIGIN_SMOOTHED_GIVEN

    noisy = np.concatenate([partition.id_indices, partition.ood_indices]).astype(np.int64)
    if len(noisy):
        probs = nn.forward(teacher.params, features[noisy])
        teacher_probs = {int(i): probs[k] for k, i in enumerate(noisy)}
        for i in partition.id_indices:
            targets[i] = teacher_probs[int(i)]
            origins[i] = ORIGIN_TEACHER_ID
        for i in partition.ood_indices:
            targets[i] = flatten_probs(teacher_probs[int(i)], s)
            origins[i] = ORIGIN_TEACHER_OOD
    return TargetAssignment(targets, origins)
