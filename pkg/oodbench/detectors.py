"""Out-of-distribution detectors over classifier outputs.

Four kinds of :class:`Detector` share one interface: ``baseline`` thresholds the
maximum softmax probability, ``odin`` does the same on a temperature-scaled output
of a perturbed input, ``iforest`` scores probability vectors with an isolation
forest fitted on in-distribution outputs only, and ``gbm`` is a boosted classifier
trained to tell in-distribution outputs from outputs on exposure data.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any, TypeAlias

import numpy as np
import numpy.typing as npt

from oodbench import gbm, iforest
from oodbench.errors import (
    CalibrationError,
    ConfigurationError,
    FitError,
    NotFittedError,
    ParseError,
)
from oodbench.gbm import BoostedClassifier
from oodbench.iforest import IsolationForest
from oodbench.nn.classifier import SoftmaxClassifier
from oodbench.ood_io import OodIO
from oodbench.samples import (
    FeatureInputs,
    FloatArray,
    ProbVector,
    as_feature_matrix,
    as_prob_matrix,
)
from oodbench.serialization.identify import (
    ObjectKind,
    format_header,
    identify_object_kind,
    split_body,
)
from oodbench.utils import HREF, StringEnum, check_keys, format_float, parse_float

logger = logging.getLogger(__name__)

#: Default quantile of in-distribution validation scores used as threshold.
DEFAULT_QUANTILE = 0.05

#: Smallest validation set a threshold is calibrated on.
MIN_CALIBRATION_POINTS = 20

DEFAULT_ODIN_TEMPERATURE = 1000.0
DEFAULT_ODIN_EPSILON = 0.005

#: Anomaly scores above this value are out-of-distribution.
IFOREST_THRESHOLD = 0.5

#: Predicted OOD probabilities above this value are out-of-distribution.
GBM_THRESHOLD = 0.5

DetectorInput: TypeAlias = "ProbVector | FeatureInputs | Sequence[ProbVector]"
WrappedModel: TypeAlias = "SoftmaxClassifier | IsolationForest | BoostedClassifier"


class DetectorKind(StringEnum):
    BASELINE = "baseline"
    ODIN = "odin"
    IFOREST = "iforest"
    GBM = "gbm"


class Verdict(StringEnum):
    IN_DISTRIBUTION = "in-distribution"
    OUT_OF_DISTRIBUTION = "out-of-distribution"


class Orientation(StringEnum):
    """Which end of a detector's score range means in-distribution."""

    LARGER_IS_IN = "larger-is-in"
    LARGER_IS_OUT = "larger-is-out"


_ORIENTATIONS = {
    DetectorKind.BASELINE: Orientation.LARGER_IS_IN,
    DetectorKind.ODIN: Orientation.LARGER_IS_IN,
    DetectorKind.IFOREST: Orientation.LARGER_IS_OUT,
    DetectorKind.GBM: Orientation.LARGER_IS_OUT,
}


class Decision:
    """The binary outcome of a detector on one input.

    Args:
        verdict : The :class:`Verdict`.
        score : The detector score the verdict was derived from.
    """

    verdict: Verdict
    score: float

    def __init__(self, verdict: Verdict, score: float) -> None:
        self.verdict = verdict
        self.score = score

    @property
    def is_ood(self) -> bool:
        return self.verdict == Verdict.OUT_OF_DISTRIBUTION

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Decision):
            return NotImplemented
        return self.verdict == other.verdict and self.score == other.score

    def __repr__(self) -> str:
        return f"<Decision {self.verdict} score={self.score}>"


def _check_quantile(quantile: float) -> float:
    if not 0.0 <= quantile < 1.0:
        raise ConfigurationError(f"quantile must be in [0, 1), got {quantile}")
    return float(quantile)


class BaselineParams:
    """Parameters of the maximum-softmax baseline.

    Args:
        quantile : Quantile of validation scores used as threshold.
    """

    def __init__(self, quantile: float = DEFAULT_QUANTILE) -> None:
        self.quantile = _check_quantile(quantile)

    def to_dict(self) -> dict[str, Any]:
        return {"quantile": self.quantile}

    @staticmethod
    def from_dict(d: dict[str, Any]) -> BaselineParams:
        check_keys(d, {"quantile"}, "baseline parameters")
        return BaselineParams(**d)


class OdinParams:
    """Parameters of ODIN.

    Args:
        temperature : Softmax temperature ``T > 0`` used for scoring. The
            perturbation gradient is always taken at ``T = 1``.
        epsilon : Perturbation magnitude ``>= 0``.
        quantile : Quantile of validation scores used as threshold.
    """

    def __init__(
        self,
        temperature: float = DEFAULT_ODIN_TEMPERATURE,
        epsilon: float = DEFAULT_ODIN_EPSILON,
        quantile: float = DEFAULT_QUANTILE,
    ) -> None:
        if not temperature > 0:
            raise ConfigurationError(f"temperature must be > 0, got {temperature}")
        if not epsilon >= 0:
            raise ConfigurationError(f"epsilon must be >= 0, got {epsilon}")
        self.temperature = float(temperature)
        self.epsilon = float(epsilon)
        self.quantile = _check_quantile(quantile)

    def to_dict(self) -> dict[str, Any]:
        return {
            "temperature": self.temperature,
            "epsilon": self.epsilon,
            "quantile": self.quantile,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> OdinParams:
        check_keys(d, {"temperature", "epsilon", "quantile"}, "odin parameters")
        return OdinParams(**d)


class IForestParams:
    """Parameters of the isolation forest detector. The forest seed is supplied
    when fitting.

    Args:
        n_trees : Number of trees ``t``.
        subsample_size : ``psi``; ``None`` uses ``min(256, n)``.
        n_jobs : Threads used to build trees; results do not depend on it.
    """

    def __init__(
        self,
        n_trees: int = iforest.DEFAULT_N_TREES,
        subsample_size: int | None = None,
        n_jobs: int = 1,
    ) -> None:
        if n_trees < 1:
            raise ConfigurationError(f"n_trees must be >= 1, got {n_trees}")
        if subsample_size is not None and subsample_size < 2:
            raise ConfigurationError(
                f"subsample_size must be >= 2, got {subsample_size}"
            )
        if n_jobs < 1:
            raise ConfigurationError(f"n_jobs must be >= 1, got {n_jobs}")
        self.n_trees = int(n_trees)
        self.subsample_size = subsample_size
        self.n_jobs = int(n_jobs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "subsample_size": self.subsample_size,
            "n_jobs": self.n_jobs,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> IForestParams:
        check_keys(d, {"n_trees", "subsample_size", "n_jobs"}, "iforest parameters")
        return IForestParams(**d)


class GbmParams:
    """Parameters of the gradient boosting detector.

    Args:
        n_trees : Number of boosting stages.
        max_depth : Depth limit of each regression tree.
        learning_rate : Shrinkage ``nu`` in ``(0, 1]``.
        balance : Give in-distribution and OOD rows equal total weight.
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 3,
        learning_rate: float = 0.1,
        balance: bool = False,
    ) -> None:
        if n_trees < 1:
            raise ConfigurationError(f"n_trees must be >= 1, got {n_trees}")
        if max_depth < 1:
            raise ConfigurationError(f"max_depth must be >= 1, got {max_depth}")
        if not 0.0 < learning_rate <= 1.0:
            raise ConfigurationError(
                f"learning_rate must be in (0, 1], got {learning_rate}"
            )
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.learning_rate = float(learning_rate)
        self.balance = bool(balance)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "balance": self.balance,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> GbmParams:
        check_keys(
            d, {"n_trees", "max_depth", "learning_rate", "balance"}, "gbm parameters"
        )
        return GbmParams(**d)


class Detector:
    """A fitted (or not yet fitted) out-of-distribution detector.

    Baseline and ODIN detectors turn a threshold on a confidence score into a
    verdict: a score strictly below the threshold means out-of-distribution.
    Isolation forest and gradient boosting detectors use a fixed ``0.5`` on their
    own scores, where larger means out-of-distribution.

    Args:
        kind : The :class:`DetectorKind`.
        threshold : Calibrated threshold of baseline and ODIN detectors.
        model : The wrapped model: the classifier for ODIN, the forest or the
            boosted classifier for the learned detectors.
        temperature : ODIN temperature.
        epsilon : ODIN perturbation magnitude.
    """

    kind: DetectorKind
    threshold: float | None
    model: WrappedModel | None

    def __init__(
        self,
        kind: DetectorKind | str,
        threshold: float | None = None,
        model: WrappedModel | None = None,
        temperature: float = DEFAULT_ODIN_TEMPERATURE,
        epsilon: float = DEFAULT_ODIN_EPSILON,
    ) -> None:
        self.kind = DetectorKind(kind)
        self.threshold = threshold
        self.model = model
        self.temperature = float(temperature)
        self.epsilon = float(epsilon)

    @property
    def orientation(self) -> Orientation:
        return _ORIENTATIONS[self.kind]

    @property
    def larger_is_in(self) -> bool:
        return self.orientation == Orientation.LARGER_IS_IN

    def is_fitted(self) -> bool:
        if self.kind == DetectorKind.BASELINE:
            return self.threshold is not None
        if self.kind == DetectorKind.ODIN:
            return self.threshold is not None and isinstance(
                self.model, SoftmaxClassifier
            )
        if self.kind == DetectorKind.IFOREST:
            return isinstance(self.model, IsolationForest)
        return isinstance(self.model, BoostedClassifier)

    def _require_fitted(self) -> None:
        if not self.is_fitted():
            raise NotFittedError(f"The {self.kind} detector has not been fitted")

    def score_batch(self, inputs: DetectorInput) -> FloatArray:
        """Raw detector scores, one per input.

        ODIN detectors take feature vectors; the other kinds take probability
        vectors.

        Raises:
            NotFittedError : If the detector is not fitted.
        """
        self._require_fitted()
        if self.kind == DetectorKind.BASELINE:
            return np.asarray(as_prob_matrix(inputs).max(axis=1), dtype=np.float64)
        if isinstance(self.model, SoftmaxClassifier):
            x = as_feature_matrix(inputs, self.model.feature_dim)
            return _odin_scores(self.model, x, self.temperature, self.epsilon)
        if isinstance(self.model, IsolationForest):
            return self.model.score_samples(inputs)
        assert isinstance(self.model, BoostedClassifier)
        return self.model.predict_proba(inputs)

    def score(self, x: ProbVector | FeatureInputs) -> float:
        return float(self.score_batch(x)[0])

    def oriented_scores(self, inputs: DetectorInput) -> FloatArray:
        """Scores flipped where needed so that larger means more in-distribution."""
        scores = self.score_batch(inputs)
        return scores if self.larger_is_in else -scores

    def _is_ood(self, scores: FloatArray) -> np.ndarray:
        if self.kind in (DetectorKind.BASELINE, DetectorKind.ODIN):
            assert self.threshold is not None
            return np.asarray(scores < self.threshold)
        limit = GBM_THRESHOLD
        if self.kind == DetectorKind.IFOREST:
            limit = IFOREST_THRESHOLD
        return np.asarray(scores > limit)

    def verdicts(self, inputs: DetectorInput) -> list[Verdict]:
        return [
            Verdict.OUT_OF_DISTRIBUTION if ood else Verdict.IN_DISTRIBUTION
            for ood in self._is_ood(self.score_batch(inputs))
        ]

    def decide(self, x: ProbVector | FeatureInputs) -> Decision:
        """Applies the detector's rule to a single input."""
        score = self.score(x)
        ood = bool(self._is_ood(np.array([score]))[0])
        verdict = Verdict.OUT_OF_DISTRIBUTION if ood else Verdict.IN_DISTRIBUTION
        return Decision(verdict, score)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Detector):
            return NotImplemented
        return self.to_text() == other.to_text()

    def __repr__(self) -> str:
        state = "fitted" if self.is_fitted() else "unfitted"
        return f"<Detector {self.kind} {state} threshold={self.threshold}>"

    def to_text(self) -> str:
        """Serializes the detector: a header line with kind, threshold and
        orientation, the ODIN parameters for ODIN detectors, then the wrapped
        model in its own format."""
        threshold = "-" if self.threshold is None else format_float(self.threshold)
        lines = [
            format_header(ObjectKind.DETECTOR),
            f"detector {self.kind.value} {threshold} {self.orientation.value}",
        ]
        if self.kind == DetectorKind.ODIN:
            lines.append(
                f"odin {format_float(self.temperature)} {format_float(self.epsilon)}"
            )
        text = "\n".join(lines) + "\n"
        if self.model is not None:
            text += self.model.to_text()
        return text

    @staticmethod
    def from_text(text: str) -> Detector:
        body = split_body(text, ObjectKind.DETECTOR)
        if not body:
            raise ParseError("Detector text has no detector line", line=2)
        fields = body[0].split()
        if len(fields) != 4 or fields[0] != "detector":
            raise ParseError(f"Malformed detector line '{body[0]}'", line=2)
        try:
            kind = DetectorKind(fields[1])
            orientation = Orientation(fields[3])
            threshold = None if fields[2] == "-" else parse_float(fields[2])
        except ValueError as e:
            raise ParseError(f"Malformed detector line: {e}", line=2)
        if orientation != _ORIENTATIONS[kind]:
            raise ParseError(
                f"A {kind} detector cannot be oriented '{orientation}'", line=2
            )
        rest = body[1:]
        temperature, epsilon = DEFAULT_ODIN_TEMPERATURE, DEFAULT_ODIN_EPSILON
        if rest and rest[0].startswith("odin "):
            try:
                _, t, eps = rest[0].split()
                temperature, epsilon = parse_float(t), parse_float(eps)
            except ValueError:
                raise ParseError(f"Malformed odin line '{rest[0]}'", line=3)
            rest = rest[1:]
        model = _read_model("\n".join(rest)) if rest else None
        return Detector(kind, threshold, model, temperature, epsilon)

    def save_object(self, dest_href: HREF, ood_io: OodIO | None = None) -> None:
        (ood_io or OodIO.default()).write_text(dest_href, self.to_text())

    @staticmethod
    def from_file(href: HREF, ood_io: OodIO | None = None) -> Detector:
        return Detector.from_text((ood_io or OodIO.default()).read_text(href))


def _read_model(text: str) -> WrappedModel:
    kind = identify_object_kind(text)
    if kind == ObjectKind.MODEL:
        return SoftmaxClassifier.from_text(text)
    if kind == ObjectKind.FOREST:
        return IsolationForest.from_text(text)
    if kind == ObjectKind.GBM:
        return BoostedClassifier.from_text(text)
    raise ParseError("A detector can only wrap a model, a forest or a gbm")


def _odin_scores(
    model: SoftmaxClassifier, x: FloatArray, temperature: float, epsilon: float
) -> FloatArray:
    perturbed = model.perturb_batch(x, epsilon)
    return np.asarray(
        model.predict_proba(perturbed, temperature).max(axis=1), dtype=np.float64
    )


def baseline_score(p: ProbVector) -> float:
    """The maximum softmax probability."""
    return p.max()


def odin_score(
    model: SoftmaxClassifier,
    x: FeatureInputs,
    temperature: float = DEFAULT_ODIN_TEMPERATURE,
    epsilon: float = DEFAULT_ODIN_EPSILON,
) -> float:
    """The ODIN confidence of a single input.

    The input is perturbed by ``epsilon`` along the sign of the gradient of the
    unscaled (``T = 1``) log-probability of its predicted class, and the maximum
    probability of the perturbed input at ``temperature`` is returned.
    """
    xs = as_feature_matrix(x, model.feature_dim)
    if xs.shape[0] != 1:
        raise ValueError("odin_score expects a single input")
    return float(_odin_scores(model, xs, temperature, epsilon)[0])


def quantile_threshold(scores: npt.ArrayLike, quantile: float) -> float:
    """The empirical ``quantile`` of ``scores`` under the inverted-CDF convention,
    which always returns an observed score.

    Raises:
        CalibrationError : If there are fewer than 20 scores.
    """
    values = np.asarray(scores, dtype=np.float64).ravel()
    q = _check_quantile(quantile)
    if len(values) < MIN_CALIBRATION_POINTS:
        raise CalibrationError(
            f"At least {MIN_CALIBRATION_POINTS} validation scores are needed, "
            f"got {len(values)}"
        )
    if not np.isfinite(values).all():
        raise CalibrationError("Validation scores must be finite")
    if 0 < len(values) * q < 1:
        logger.warning(
            f"Quantile {q} of {len(values)} scores is the minimum; the threshold "
            "will accept every validation point"
        )
    return float(np.quantile(values, q, method="inverted_cdf"))


def calibrate_baseline(
    val_probs: Sequence[ProbVector] | npt.ArrayLike,
    quantile: float = DEFAULT_QUANTILE,
) -> Detector:
    """Calibrates a baseline detector on in-distribution validation outputs.

    Raises:
        CalibrationError : If fewer than 20 vectors are given.
    """
    scores = as_prob_matrix(val_probs).max(axis=1)
    threshold = quantile_threshold(scores, quantile)
    logger.debug(f"Baseline threshold {threshold} at quantile {quantile}")
    return Detector(DetectorKind.BASELINE, threshold)


def calibrate_odin(
    model: SoftmaxClassifier,
    val_features: FeatureInputs,
    temperature: float = DEFAULT_ODIN_TEMPERATURE,
    epsilon: float = DEFAULT_ODIN_EPSILON,
    quantile: float = DEFAULT_QUANTILE,
) -> Detector:
    """Calibrates an ODIN detector on the ODIN scores of (perturbed) in-distribution
    validation inputs.

    Raises:
        CalibrationError : If fewer than 20 inputs are given.
    """
    params = OdinParams(temperature, epsilon, quantile)
    x = as_feature_matrix(val_features, model.feature_dim)
    scores = _odin_scores(model, x, params.temperature, params.epsilon)
    threshold = quantile_threshold(scores, params.quantile)
    logger.debug(f"ODIN threshold {threshold} at T={temperature}, eps={epsilon}")
    return Detector(
        DetectorKind.ODIN, threshold, model, params.temperature, params.epsilon
    )


def fit_iforest_detector(
    val_probs: Sequence[ProbVector] | npt.ArrayLike,
    params: IForestParams | None = None,
    seed: int = 0,
) -> Detector:
    """Fits an isolation forest on in-distribution validation outputs.

    Raises:
        FitError : If fewer than two vectors are given.
    """
    params = params or IForestParams()
    subsample = params.subsample_size
    n = len(as_prob_matrix(val_probs))
    if subsample is not None and subsample > n:
        logger.warning(f"subsample_size {subsample} exceeds {n} points; using {n}")
        subsample = n
    forest = iforest.fit(
        val_probs,
        n_trees=params.n_trees,
        subsample_size=subsample,
        seed=seed,
        n_jobs=params.n_jobs,
    )
    return Detector(DetectorKind.IFOREST, model=forest)


def fit_gbm_detector(
    val_probs: Sequence[ProbVector] | npt.ArrayLike,
    ood_probs: Sequence[ProbVector] | npt.ArrayLike,
    params: GbmParams | None = None,
    seed: int = 0,
) -> Detector:
    """Fits a boosted classifier separating in-distribution outputs (label 0) from
    outputs on exposure data (label 1).

    Raises:
        FitError : If either list is empty.
    """
    params = params or GbmParams()
    x_in = as_prob_matrix(val_probs)
    x_out = as_prob_matrix(ood_probs)
    if len(x_in) == 0 or len(x_out) == 0:
        raise FitError("Both in-distribution and OOD outputs are required")
    model = gbm.fit(
        np.vstack([x_in, x_out]),
        np.concatenate([np.zeros(len(x_in)), np.ones(len(x_out))]),
        n_trees=params.n_trees,
        max_depth=params.max_depth,
        learning_rate=params.learning_rate,
        seed=seed,
        balance=params.balance,
    )
    return Detector(DetectorKind.GBM, model=model)


def decide(detector: Detector, x: ProbVector | FeatureInputs) -> Decision:
    """Applies ``detector`` to a single input.

    Raises:
        NotFittedError : If the detector is not fitted.
    """
    return detector.decide(x)
