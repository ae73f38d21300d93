"""Loss terms: two-view soft-target cross-entropy, signed consistency, joint mix.

Losses use natural logs (gradient-friendly scale); the selection score in
``selection`` uses base-2 logs for boundedness. Probabilities are floored at
``PROB_FLOOR`` before any log to guard fully saturated softmax outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericFailureError

PROB_FLOOR = 1e-12


@dataclass
class LossReport:
    """Loss components of one batch: l_total = (1-alpha)*l_c + alpha*l_o."""

    l_c: float
    l_o: float
    l_total: float
    alpha: float
    batch_size: int


def _as_prob_matrix(arr, name: str) -> np.ndarray:
    out = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    if np.any(out < 0) or np.any(np.abs(out.sum(axis=1) - 1.0) > 1e-6):
        raise InvalidInputError(f"{name} rows must be probability distributions")
    return out


def classification_loss(p_batch, p_prime_batch, targets) -> float:
    """Mean over samples of the soft-target cross-entropy summed over both views."""
    P = _as_prob_matrix(p_batch, "p_batch")
    Pp = _as_prob_matrix(p_prime_batch, "p_prime_batch")
    T = _as_prob_matrix(targets, "targets")
    if not (P.shape == Pp.shape == T.shape):
        raise InvalidInputError("prediction and target batches must share one shape")
    log_p = np.log(np.clip(P, PROB_FLOOR, None))
    log_pp = np.log(np.clip(Pp, PROB_FLOOR, None))
    per_sample = -(T * log_p).sum(axis=1) - (T * log_pp).sum(axis=1)
    value = float(per_sample.mean())
    if not np.isfinite(value):
        raise NumericFailureError("classification loss is non-finite")
    return value


def consistency_loss(p_batch, p_prime_batch, signs) -> float:
    """Mean of sign * (KL(p||p') + KL(p'||p)) over the batch; symmetric in views."""
    P = _as_prob_matrix(p_batch, "p_batch")
    Pp = _as_prob_matrix(p_prime_batch, "p_prime_batch")
    rho = np.atleast_1d(np.asarray(signs, dtype=np.float64))
    if P.shape != Pp.shape or rho.shape[0] != P.shape[0]:
        raise InvalidInputError("prediction batches and signs must share one length")
    if not np.all(np.isin(rho, (-1.0, 1.0))):
        raise InvalidInputError("signs must be +1 or -1")
    log_p = np.log(np.clip(P, PROB_FLOOR, None))
    log_pp = np.log(np.clip(Pp, PROB_FLOOR, None))
    sym_kl = (P * (log_p - log_pp)).sum(axis=1) + (Pp * (log_pp - log_p)).sum(axis=1)
    value = float((rho * sym_kl).mean())
    if not np.isfinite(value):
        raise NumericFailureError("consistency loss is non-finite")
    return value


def joint_loss(l_c: float, l_o: float, alpha: float, batch_size: int = 0) -> LossReport:
    """Convex combination of the classification and consistency terms."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must be in [0, 1], got {alpha}")
    total = (1.0 - alpha) * l_c + alpha * l_o
    return LossReport(l_c=float(l_c), l_o=float(l_o), l_total=float(total),
                      alpha=float(alpha), batch_size=int(batch_size))
