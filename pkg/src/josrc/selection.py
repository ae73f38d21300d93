"""Sample selection scores and criteria.

A sample's clean likelihood is 1 minus the Jensen-Shannon divergence
(base-2 logs, so the score lives in [0, 1]) between its predicted
distribution and its smoothed given-label distribution; thresholding that
score selects clean samples globally, independent of mini-batch
composition. Among the non-clean rest, a sample counts as
out-of-distribution when its two augmented views predict different argmax
classes. A per-mini-batch small-loss selector is included purely as a
contrast baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass
class CleanScore:
    """JS divergence d and the clean likelihood 1 - d."""

    d: float
    p_clean: float


@dataclass
class OodScore:
    """1.0 when the two views' argmax classes differ, else 0.0."""

    p_ood: float


@dataclass
class ThresholdSchedule:
    """Clean-threshold ramp: 0 -> tau_c over warm-up, then tau_c -> tau_m."""

    tau_c: float
    tau_m: float
    warmup_epochs: int
    total_epochs: int

    def __post_init__(self):
        if not 0.0 < self.tau_c < 1.0:
            raise InvalidInputError(f"tau_c out of (0,1): {self.tau_c}")
        if not 0.0 < self.tau_m <= 1.0:
            raise InvalidInputError(f"tau_m out of (0,1]: {self.tau_m}")
        if self.tau_c >= self.tau_m:
            raise InvalidInputError("tau_c must be smaller than tau_m")
        if not 0 < self.warmup_epochs < self.total_epochs:
            raise InvalidInputError("need 0 < warmup_epochs < total_epochs")


@dataclass
class BatchPartition:
    """Disjoint clean / id / ood index sets covering one mini-batch."""

    clean_indices: np.ndarray
    id_indices: np.ndarray
    ood_indices: np.ndarray

    def size(self) -> int:
        return len(self.clean_indices) + len(self.id_indices) + len(self.ood_indices)


def _validate_dist(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-D probability vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"{name} is not a probability distribution")
    return p


def js_divergence(p, y) -> float:
    """Jensen-Shannon divergence with base-2 logs; symmetric, in [0, 1].

    Both arguments must be strictly positive (smooth one-hot labels first).
    """
    p = _validate_dist(p, "p")
    y = _validate_dist(y, "y")
    if p.shape != y.shape:
        raise InvalidInputError("distributions must have equal length")
    if np.any(p <= 0) or np.any(y <= 0):
        raise InvalidInputError("zero entry in a log argument; smooth the distributions first")
    m = 0.5 * (p + y)
    d = 0.5 * float(np.sum(p * np.log2(p / m))) + 0.5 * float(np.sum(y * np.log2(y / m)))
    if d < 0.0:
        d = 0.0
    if d > 1.0:
        if d > 1.0 + 1e-12:
            raise InvalidInputError(f"JS divergence {d} outside [0, 1]")
        d = 1.0
    return d


def js_divergence_rows(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise JS divergence for (B, C) batches; inputs must be positive."""
    M = 0.5 * (P + Y)
    d = 0.5 * np.sum(P * np.log2(P / M), axis=1) + 0.5 * np.sum(Y * np.log2(Y / M), axis=1)
    return np.clip(d, 0.0, 1.0)


def clean_likelihood(p, y_smoothed) -> CleanScore:
    """Clean likelihood 1 - JS(p, y_smoothed)."""
    d = js_divergence(p, y_smoothed)
    return CleanScore(d=d, p_clean=1.0 - d)


def ood_likelihood(p, p_prime) -> OodScore:
    """0 when the views' argmax classes coincide, else 1 (min-clamped index gap)."""
    p = _validate_dist(p, "p")
    pp = _validate_dist(p_prime, "p_prime")
    if p.shape != pp.shape:
        raise InvalidInputError("distributions must have equal length")
    gap = abs(int(np.argmax(p)) - int(np.argmax(pp)))
    return OodScore(p_ood=float(min(1, gap)))


def dynamic_threshold(t: int, sched: ThresholdSchedule) -> float:
    """Clean threshold at epoch t: linear ramp to tau_c over warm-up,
    then linear from tau_c to tau_m by the final epoch."""
    if not 1 <= t <= sched.total_epochs:
        raise InvalidInputError(f"epoch {t} outside [1, {sched.total_epochs}]")
    if t <= sched.warmup_epochs:
        return sched.tau_c * t / sched.warmup_epochs
    return sched.tau_c + (t - sched.warmup_epochs) * (sched.tau_m - sched.tau_c) / (
        sched.total_epochs - sched.warmup_epochs
    )


def partition_batch(
    p_batch,
    p_prime_batch,
    y_smoothed_batch,
    tau_clean: float,
    tau_ood: float,
    use_view_average: bool = False,
) -> BatchPartition:
    """Split a batch into clean / id / ood index sets.

    Clean iff the first view's clean likelihood exceeds tau_clean
    (``use_view_average`` scores the mean of both views instead); among the
    rest, ood iff the views' argmax classes disagree.
    """
    P = np.atleast_2d(np.asarray(p_batch, dtype=np.float64))
    Pp = np.atleast_2d(np.asarray(p_prime_batch, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(y_smoothed_batch, dtype=np.float64))
    if not (P.shape == Pp.shape == Y.shape):
        raise InvalidInputError("batch arrays must share one shape")
    if not 0.0 <= tau_clean <= 1.0:
        raise InvalidInputError(f"tau_clean out of [0,1]: {tau_clean}")
    if not 0.0 < tau_ood < 1.0:
        raise InvalidInputError(f"tau_ood out of (0,1): {tau_ood}")
    if np.any(Y <= 0):
        raise InvalidInputError("zero entry in a log argument; smooth the labels first")

    scored = 0.5 * (P + Pp) if use_view_average else P
    p_clean = 1.0 - js_divergence_rows(scored, Y)
    clean = p_clean > tau_clean
    p_ood = (np.argmax(P, axis=1) != np.argmax(Pp, axis=1)).astype(np.float64)
    ood = ~clean & (p_ood > tau_ood)
    idn = ~clean & ~ood
    return BatchPartition(
        np.flatnonzero(clean), np.flatnonzero(idn), np.flatnonzero(ood)
    )


def small_loss_select(losses, drop_rate: float) -> np.ndarray:
    """Contrast baseline: the ceil((1-drop_rate)*B) smallest-loss indices
    within the mini-batch, ties broken by lower index."""
    if not 0.0 <= drop_rate < 1.0:
        raise InvalidInputError(f"drop_rate out of [0,1): {drop_rate}")
    losses = np.asarray(losses, dtype=np.float64)
    keep = math.ceil((1.0 - drop_rate) * len(losses))
    order = np.argsort(losses, kind="stable")
    return np.sort(order[:keep])
