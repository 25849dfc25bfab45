from __future__ import annotations

import numpy as np
import numpy.typing as npt

from oodbench.samples import FloatArray, ProbVector

#: Floor applied to probabilities inside logarithms.
LOG_FLOOR = 1e-12


def softmax(logits: npt.ArrayLike, temperature: float = 1.0) -> FloatArray:
    """Row-wise softmax of ``logits / temperature``, shifted by the row maximum."""
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return np.asarray(e / e.sum(axis=-1, keepdims=True), dtype=np.float64)


def smoothed_targets(labels: npt.ArrayLike, n_classes: int, alpha: float) -> FloatArray:
    """Label-smoothed target distributions ``(1 - alpha) * onehot(y) + alpha / M``,
    one row per label."""
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    q = np.full((len(y), n_classes), alpha / n_classes)
    q[np.arange(len(y)), y] += 1.0 - alpha
    return q


def cross_entropy(probs: npt.ArrayLike, targets: npt.ArrayLike) -> FloatArray:
    """Row-wise ``-sum_k q_k log p_k`` with ``p`` floored at ``1e-12``."""
    p = np.maximum(np.asarray(probs, dtype=np.float64), LOG_FLOOR)
    q = np.asarray(targets, dtype=np.float64)
    return np.asarray(-(q * np.log(p)).sum(axis=-1), dtype=np.float64)


def smoothed_cross_entropy(p: ProbVector, y: int, alpha: float) -> float:
    """Cross-entropy of ``p`` against the label-smoothed target of class ``y``.

    Args:
        p : The predicted distribution.
        y : The true class, ``0 <= y < M``.
        alpha : The smoothing weight in ``[0, 1)``.
    """
    if not 0 <= y < p.n_classes:
        raise ValueError(f"Label {y} is outside of [0, {p.n_classes})")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"Label smoothing must be in [0, 1), got {alpha}")
    q = smoothed_targets([y], p.n_classes, alpha)[0]
    return float(cross_entropy(p.probs, q))


def oe_uniform_term(p: ProbVector) -> float:
    """Cross-entropy of ``p`` against the uniform distribution, ``-mean_k log p_k``.

    Always at least ``ln M``, with equality for the uniform distribution.
    """
    return float(-np.log(np.maximum(p.probs, LOG_FLOOR)).mean())


def entropy(probs: npt.ArrayLike) -> FloatArray:
    """Row-wise Shannon entropy in nats."""
    p = np.asarray(probs, dtype=np.float64)
    logs = np.log(np.maximum(p, LOG_FLOOR))
    return np.asarray(-(p * logs).sum(axis=-1), dtype=np.float64)
