from __future__ import annotations

from collections.abc import Iterator, Sequence
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from oodbench.errors import DimensionMismatchError, InvalidProbVectorError

#: Absolute tolerance on the sum of a probability vector.
PROB_SUM_TOLERANCE = 1e-6

ArrayLike = npt.ArrayLike
FloatArray = npt.NDArray[np.float64]

#: Anything accepted where one or more feature vectors are expected.
FeatureInputs: TypeAlias = "FeatureVector | Sequence[FeatureVector] | npt.ArrayLike"


def _readonly(values: ArrayLike) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def check_prob_matrix(probs: ArrayLike) -> FloatArray:
    """Validates a batch of probability vectors, one per row, and returns it as a
    2-D float array.

    Raises:
        InvalidProbVectorError : If any row violates the probability vector
            invariants. The message names the first offending row (0-based).
    """
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidProbVectorError(
            f"Expected a 2-D array of probability vectors, got {arr.ndim} dimensions"
        )
    if arr.shape[1] < 2:
        raise InvalidProbVectorError(
            f"A probability vector needs at least 2 entries, got {arr.shape[1]}"
        )
    if arr.shape[0] == 0:
        return arr
    bad = ~np.isfinite(arr).all(axis=1)
    bad |= ((arr < 0.0) | (arr > 1.0)).any(axis=1)
    with np.errstate(invalid="ignore"):
        bad |= np.abs(arr.sum(axis=1) - 1.0) > PROB_SUM_TOLERANCE
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise InvalidProbVectorError(
            f"Row {row} is not a probability vector: {arr[row].tolist()}"
        )
    return arr


class ProbVector:
    """A softmax output over ``M`` classes, the input consumed by every detector.

    Entries are in ``[0, 1]`` and sum to one within ``1e-6``. The constructor
    enforces these invariants; the stored array is read-only.

    Args:
        probs : Sequence of ``M >= 2`` probabilities.

    Raises:
        InvalidProbVectorError : If ``probs`` is not a probability vector.
    """

    probs: FloatArray
    """Read-only array of the probabilities."""

    def __init__(self, probs: ArrayLike) -> None:
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidProbVectorError(
                f"A probability vector must be 1-D, got shape {arr.shape}"
            )
        check_prob_matrix(arr)
        self.probs = _readonly(arr)

    @classmethod
    def uniform(cls, n_classes: int) -> ProbVector:
        return cls(np.full(n_classes, 1.0 / n_classes))

    @classmethod
    def one_hot(cls, index: int, n_classes: int) -> ProbVector:
        probs = np.zeros(n_classes)
        probs[index] = 1.0
        return cls(probs)

    @property
    def n_classes(self) -> int:
        return int(self.probs.shape[0])

    def max(self) -> float:
        """The largest probability, the softmax confidence."""
        return float(self.probs.max())

    def argmax(self) -> int:
        """The predicted class."""
        return int(self.probs.argmax())

    def entropy(self) -> float:
        """Shannon entropy in nats; zero entries contribute zero."""
        p = self.probs[self.probs > 0.0]
        return float(-(p * np.log(p)).sum())

    def to_list(self) -> list[float]:
        return [float(v) for v in self.probs]

    def __len__(self) -> int:
        return self.n_classes

    def __iter__(self) -> Iterator[float]:
        return iter(self.to_list())

    def __getitem__(self, index: int) -> float:
        return float(self.probs[index])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbVector):
            return NotImplemented
        return bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"<ProbVector {self.to_list()}>"


class FeatureVector:
    """A raw model-input point of ``d`` finite reals.

    Args:
        values : The feature values.

    Raises:
        ValueError : If any value is not finite or ``values`` is not 1-D.
    """

    values: FloatArray
    """Read-only array of the feature values."""

    def __init__(self, values: ArrayLike) -> None:
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] == 0:
            raise ValueError(f"A feature vector must be non-empty 1-D, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError(f"Feature values must be finite: {arr.tolist()}")
        self.values = _readonly(arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, index: int) -> float:
        return float(self.values[index])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __repr__(self) -> str:
        return f"<FeatureVector {self.to_list()}>"


class LabeledSample:
    """A feature vector together with its class label.

    Args:
        features : The input point.
        label : Class index, ``0 <= label``. If ``n_classes`` is given the label
            must also be below it.
        n_classes : Optional number of classes used to check ``label``.
    """

    features: FeatureVector
    label: int

    def __init__(
        self,
        features: FeatureVector | ArrayLike,
        label: int,
        n_classes: int | None = None,
    ) -> None:
        if not isinstance(features, FeatureVector):
            features = FeatureVector(features)
        label = int(label)
        if label < 0 or (n_classes is not None and label >= n_classes):
            raise ValueError(
                f"Label {label} is outside of [0, {n_classes if n_classes else 'M'})"
            )
        self.features = features
        self.label = label

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return self.label == other.label and self.features == other.features

    def __hash__(self) -> int:
        return hash((self.label, self.features))

    def __repr__(self) -> str:
        return f"<LabeledSample label={self.label} {self.features.to_list()}>"


def as_feature_matrix(
    inputs: Sequence[FeatureVector] | ArrayLike, dim: int | None = None
) -> FloatArray:
    """Stacks feature vectors (or passes a 2-D array through) into an ``(n, d)``
    float array, checking the dimension against ``dim`` when given."""
    if isinstance(inputs, FeatureVector):
        arr = inputs.values.reshape(1, -1)
    elif isinstance(inputs, Sequence) and len(inputs) > 0 and all(
        isinstance(v, FeatureVector) for v in inputs
    ):
        arr = np.stack([v.values for v in inputs])  # type: ignore[union-attr]
    else:
        arr = np.asarray(inputs, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, dim or 0)
    if arr.ndim != 2:
        raise ValueError(f"Expected a 2-D array of features, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatchError(dim, int(arr.shape[1]), "features")
    return np.asarray(arr, dtype=np.float64)


def as_prob_matrix(inputs: Sequence[ProbVector] | ArrayLike) -> FloatArray:
    """Stacks probability vectors (or validates a 2-D array) into an ``(n, M)``
    float array."""
    if isinstance(inputs, ProbVector):
        return inputs.probs.reshape(1, -1)
    if isinstance(inputs, Sequence) and len(inputs) > 0 and all(
        isinstance(v, ProbVector) for v in inputs
    ):
        probs = [v.probs for v in inputs]  # type: ignore[union-attr]
        if len({p.shape[0] for p in probs}) != 1:
            raise DimensionMismatchError(
                probs[0].shape[0],
                next(p.shape[0] for p in probs if p.shape[0] != probs[0].shape[0]),
                "probability vector",
            )
        return np.stack(probs)
    return check_prob_matrix(inputs)


def prob_vectors(probs: ArrayLike) -> list[ProbVector]:
    """Splits a 2-D array of probabilities into :class:`ProbVector` instances."""
    return [ProbVector(row) for row in check_prob_matrix(probs)]


def feature_vectors(features: ArrayLike) -> list[FeatureVector]:
    """Splits a 2-D feature array into :class:`FeatureVector` instances."""
    return [FeatureVector(row) for row in as_feature_matrix(features)]
