"""Evaluation metrics for out-of-distribution detectors.

In-distribution inputs are the positive class throughout: scores are oriented so
that larger means more in-distribution, and the true positive rate is the fraction
of in-distribution inputs accepted.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from typing import Any

import numpy as np
import numpy.typing as npt

from oodbench.detectors import Detector, DetectorInput, Verdict
from oodbench.samples import FloatArray
from oodbench.utils import get_required

#: Pool name of rows averaged over several OOD pools.
AVERAGE_POOL = "average"

#: True positive rate at which the false positive rate is reported.
DEFAULT_TPR_LEVEL = 0.95

_RANK_SLACK = 1e-9


class ScorePair:
    """In-distribution and OOD scores of one detector, both oriented so that
    larger means more in-distribution.

    Raises:
        ValueError : If either side is empty or holds a non-finite score.
    """

    in_scores: FloatArray
    out_scores: FloatArray

    def __init__(self, in_scores: npt.ArrayLike, out_scores: npt.ArrayLike) -> None:
        self.in_scores = np.asarray(in_scores, dtype=np.float64).ravel()
        self.out_scores = np.asarray(out_scores, dtype=np.float64).ravel()
        for name, scores in (("in", self.in_scores), ("out", self.out_scores)):
            if len(scores) == 0:
                raise ValueError(f"The {name} scores are empty")
            if not np.isfinite(scores).all():
                raise ValueError(f"The {name} scores must be finite")

    def flipped(self) -> ScorePair:
        """The pair with both orientations reversed."""
        return ScorePair(-self.in_scores, -self.out_scores)

    def swapped(self) -> ScorePair:
        return ScorePair(self.out_scores, self.in_scores)

    def __repr__(self) -> str:
        return f"<ScorePair in={len(self.in_scores)} out={len(self.out_scores)}>"


def auroc(sp: ScorePair) -> float:
    """Area under the ROC curve: the probability that a random in-distribution
    score exceeds a random OOD score, ties counting one half.

    Computed by binary search over the sorted OOD scores; the counts are exact
    integers, so the result equals the pairwise definition.
    """
    out_sorted = np.sort(sp.out_scores)
    below = np.searchsorted(out_sorted, sp.in_scores, side="left")
    not_above = np.searchsorted(out_sorted, sp.in_scores, side="right")
    wins = float(below.sum())
    ties = float((not_above - below).sum())
    return (wins + 0.5 * ties) / (len(sp.in_scores) * len(sp.out_scores))


def tpr_threshold(sp: ScorePair, tpr_level: float = DEFAULT_TPR_LEVEL) -> float:
    """The largest observed score ``tau`` such that at least ``tpr_level`` of the
    in-distribution scores are ``>= tau``, i.e. the ``k``-th largest in-distribution
    score with ``k = ceil(tpr_level * n_in)``."""
    if not 0.0 < tpr_level <= 1.0:
        raise ValueError(f"tpr_level must be in (0, 1], got {tpr_level}")
    k = max(math.ceil(tpr_level * len(sp.in_scores) - _RANK_SLACK), 1)
    return float(np.sort(sp.in_scores)[::-1][k - 1])


def fpr_at_tpr(sp: ScorePair, tpr_level: float = DEFAULT_TPR_LEVEL) -> float:
    """False positive rate at the threshold accepting ``tpr_level`` of
    in-distribution inputs: the fraction of OOD scores ``>= tau`` with ``tau``
    from :func:`tpr_threshold`. No interpolation takes place.
    """
    tau = tpr_threshold(sp, tpr_level)
    return float(np.mean(sp.out_scores >= tau))


def ood_error(
    in_decisions: Sequence[Verdict | str], out_decisions: Sequence[Verdict | str]
) -> float:
    """Misclassification rate of the binary decision over the combined set:
    rejected in-distribution inputs plus accepted OOD inputs, divided by all
    inputs."""
    if len(in_decisions) == 0 or len(out_decisions) == 0:
        raise ValueError("Both decision lists must be non-empty")
    false_out = sum(1 for v in in_decisions if Verdict(v) != Verdict.IN_DISTRIBUTION)
    false_in = sum(1 for v in out_decisions if Verdict(v) == Verdict.IN_DISTRIBUTION)
    return (false_out + false_in) / (len(in_decisions) + len(out_decisions))


def _unit_interval(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return float(value)


class MetricsRow:
    """One line of an evaluation report.

    Args:
        method : The evaluated method.
        pool : Tag of the OOD pool, or ``"average"``.
        ood_error : Misclassification rate of the in/out decision.
        auroc : Area under the ROC curve.
        fpr_at_95_tpr : False positive rate at 95% true positive rate.
        threshold : Calibrated score threshold, ``None`` for methods with a fixed
            decision rule.
        classification_error : Error of the classifier feeding the detector on
            in-distribution test inputs.
    """

    def __init__(
        self,
        method: str,
        pool: str,
        ood_error: float,
        auroc: float,
        fpr_at_95_tpr: float,
        threshold: float | None = None,
        classification_error: float | None = None,
    ) -> None:
        self.method = str(method)
        self.pool = str(pool)
        self.ood_error = _unit_interval("ood_error", ood_error)
        self.auroc = _unit_interval("auroc", auroc)
        self.fpr_at_95_tpr = _unit_interval("fpr_at_95_tpr", fpr_at_95_tpr)
        self.threshold = None if threshold is None else float(threshold)
        self.classification_error = (
            None
            if classification_error is None
            else _unit_interval("classification_error", classification_error)
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetricsRow):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return (
            f"<MetricsRow {self.method}/{self.pool} error={self.ood_error:.4f} "
            f"auroc={self.auroc:.4f} fpr95={self.fpr_at_95_tpr:.4f}>"
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "method": self.method,
            "pool": self.pool,
            "ood_error": self.ood_error,
            "auroc": self.auroc,
            "fpr_at_95_tpr": self.fpr_at_95_tpr,
        }
        if self.threshold is not None:
            d["threshold"] = self.threshold
        if self.classification_error is not None:
            d["classification_error"] = self.classification_error
        return d

    @staticmethod
    def from_dict(d: dict[str, Any]) -> MetricsRow:
        return MetricsRow(
            method=get_required(d, "metrics row", "method"),
            pool=get_required(d, "metrics row", "pool"),
            ood_error=get_required(d, "metrics row", "ood_error"),
            auroc=get_required(d, "metrics row", "auroc"),
            fpr_at_95_tpr=get_required(d, "metrics row", "fpr_at_95_tpr"),
            threshold=d.get("threshold"),
            classification_error=d.get("classification_error"),
        )


def metrics_row(
    method: str,
    pool: str,
    sp: ScorePair,
    in_verdicts: Sequence[Verdict | str],
    out_verdicts: Sequence[Verdict | str],
    threshold: float | None = None,
    classification_error: float | None = None,
) -> MetricsRow:
    """Builds a row from oriented scores and the verdicts on both sides."""
    return MetricsRow(
        method,
        pool,
        ood_error(in_verdicts, out_verdicts),
        auroc(sp),
        fpr_at_tpr(sp, DEFAULT_TPR_LEVEL),
        threshold,
        classification_error,
    )


def evaluate_detector(
    detector: Detector,
    in_inputs: DetectorInput,
    out_inputs: DetectorInput,
    method: str | None = None,
    pool: str = "ood",
    classification_error: float | None = None,
) -> MetricsRow:
    """Scores both sides with ``detector`` and computes all three metrics.

    Args:
        detector : A fitted detector.
        in_inputs : In-distribution inputs of the type the detector consumes.
        out_inputs : OOD inputs of the same type.
        method : Name of the row's method, the detector kind by default.
        pool : Tag of the OOD inputs.
        classification_error : Carried into the row unchanged.
    """
    sp = ScorePair(
        detector.oriented_scores(in_inputs), detector.oriented_scores(out_inputs)
    )
    return metrics_row(
        method or detector.kind.value,
        pool,
        sp,
        detector.verdicts(in_inputs),
        detector.verdicts(out_inputs),
        detector.threshold,
        classification_error,
    )


def evaluate_detector_pools(
    detector: Detector,
    in_inputs: DetectorInput,
    pools: Mapping[str, DetectorInput],
    method: str | None = None,
    classification_error: float | None = None,
) -> list[MetricsRow]:
    """Evaluates a detector on several OOD pools, in order, and appends their
    macro average when there is more than one pool."""
    rows = [
        evaluate_detector(
            detector, in_inputs, inputs, method, tag, classification_error
        )
        for tag, inputs in pools.items()
    ]
    if len(rows) > 1:
        rows.append(average_rows(rows))
    return rows


def _mean_opt(values: list[float | None]) -> float | None:
    if not values or any(v is None for v in values):
        return None
    return float(np.mean([v for v in values if v is not None]))


def average_rows(
    rows: Sequence[MetricsRow], method: str | None = None, pool: str = AVERAGE_POOL
) -> MetricsRow:
    """Macro average of rows: the arithmetic mean of every metric.

    The threshold and classification error are averaged only when every row has
    one. The method defaults to that of the first row.
    """
    if not rows:
        raise ValueError("Cannot average zero rows")
    return MetricsRow(
        method or rows[0].method,
        pool,
        float(np.mean([r.ood_error for r in rows])),
        float(np.mean([r.auroc for r in rows])),
        float(np.mean([r.fpr_at_95_tpr for r in rows])),
        _mean_opt([r.threshold for r in rows]),
        _mean_opt([r.classification_error for r in rows]),
    )
