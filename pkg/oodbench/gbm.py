"""Gradient-boosted regression trees for binary classification with logistic loss.

Every stage fits a depth-limited least-squares tree to the pseudo-residuals
``y - sigmoid(F)`` and replaces its leaf values by one Newton step. The fit is
deterministic: there is no row or feature subsampling.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator, Sequence
from typing import Any, TypeAlias

import numpy as np
import numpy.typing as npt

from oodbench.errors import (
    ConfigurationError,
    DimensionMismatchError,
    FitError,
    ParseError,
)
from oodbench.ood_io import OodIO
from oodbench.samples import FloatArray, ProbVector, as_prob_matrix
from oodbench.serialization.identify import ObjectKind, format_header, split_body
from oodbench.utils import HREF, format_float, parse_float

logger = logging.getLogger(__name__)

#: Lower bound of Newton leaf denominators.
HESSIAN_FLOOR = 1e-6

#: Base rates are clamped to ``[BASE_RATE_CLAMP, 1 - BASE_RATE_CLAMP]``.
BASE_RATE_CLAMP = 1e-6

#: Gains at or below this value do not split a node.
MIN_GAIN = 1e-12

#: Relative tolerance under which two gains count as tied.
TIE_TOLERANCE = 1e-12


def sigmoid(x: npt.ArrayLike) -> FloatArray:
    """Logistic function, computed without overflow for large ``|x|``."""
    z = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.asarray(np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)), np.float64)


def log_loss(
    y: npt.ArrayLike, raw: npt.ArrayLike, weights: npt.ArrayLike | None = None
) -> float:
    """Weighted mean logistic loss of raw scores against binary labels."""
    labels = np.asarray(y, dtype=np.float64)
    f = np.asarray(raw, dtype=np.float64)
    # log(1 + exp(f)) - y f, written to avoid overflow
    per_point = np.maximum(f, 0.0) + np.log1p(np.exp(-np.abs(f))) - labels * f
    w = np.ones_like(labels) if weights is None else np.asarray(weights, np.float64)
    return float((w * per_point).sum() / w.sum())


class SplitCandidate:
    """Best split found by :func:`split_search`."""

    def __init__(self, feature: int, threshold: float, gain: float) -> None:
        self.feature = feature
        self.threshold = threshold
        self.gain = gain

    def __repr__(self) -> str:
        return (
            f"<SplitCandidate x[{self.feature}] <= {self.threshold} "
            f"gain={self.gain}>"
        )


def _midpoint(low: float, high: float) -> float:
    mid = low + (high - low) / 2.0
    return mid if low <= mid < high else low


def _is_better(gain: float, best: float) -> bool:
    return gain > best + TIE_TOLERANCE * max(abs(best), 1.0)


def split_search(
    points: npt.ArrayLike,
    residuals: npt.ArrayLike,
    features: Sequence[int] | None = None,
    weights: npt.ArrayLike | None = None,
) -> SplitCandidate | None:
    """Exhaustive least-squares split search.

    Candidate thresholds are the midpoints of consecutive distinct sorted values of
    each feature; points with ``x[feature] <= threshold`` go left. The gain is the
    (weighted) reduction of the residual sum of squares divided by the total
    weight, i.e. the reduction in variance. Ties within a relative ``1e-12`` go to
    the lowest feature index, then the lowest threshold.

    Returns:
        The best :class:`SplitCandidate`, or ``None`` when no split has a positive
        gain (all points identical or all residuals equal), signalling a leaf.
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    r = np.asarray(residuals, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        return None
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    total = w.sum()
    centered = r - (w * r).sum() / total

    best: SplitCandidate | None = None
    for feature in range(d) if features is None else sorted(features):
        order = np.argsort(x[:, feature], kind="stable")
        xs = x[order, feature]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        w_left = np.cumsum(w[order])[:-1]
        s_left = np.cumsum((w * centered)[order])[:-1]
        w_right = total - w_left
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = s_left**2 * (1.0 / w_left + 1.0 / w_right) / total
        gains = np.where(valid & (w_left > 0) & (w_right > 0), gains, -np.inf)
        top = float(gains.max())
        if not np.isfinite(top):
            continue
        # first position within tolerance of the maximum
        pos = int(np.argmax(gains >= top - TIE_TOLERANCE * max(abs(top), 1.0)))
        gain = float(gains[pos])
        if best is None or _is_better(gain, best.gain):
            best = SplitCandidate(feature, _midpoint(xs[pos], xs[pos + 1]), gain)
    if best is None or best.gain <= MIN_GAIN:
        return None
    return best


class RegressionLeaf:
    def __init__(self, value: float) -> None:
        self.value = value

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RegressionLeaf) and other.value == self.value

    def __repr__(self) -> str:
        return f"<RegressionLeaf {self.value}>"


class RegressionSplit:
    """Internal node; points with ``x[feature] <= threshold`` go left."""

    def __init__(
        self,
        feature: int,
        threshold: float,
        left: RegressionNode,
        right: RegressionNode,
    ) -> None:
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, RegressionSplit)
            and other.feature == self.feature
            and other.threshold == self.threshold
            and other.left == self.left
            and other.right == self.right
        )

    def __repr__(self) -> str:
        return f"<RegressionSplit x[{self.feature}] <= {self.threshold}>"


RegressionNode: TypeAlias = RegressionLeaf | RegressionSplit


class RegressionTree:
    """A depth-limited regression tree with Newton-step leaf values."""

    def __init__(self, root: RegressionNode, max_depth: int) -> None:
        self.root = root
        self.max_depth = max_depth

    @classmethod
    def fit(
        cls,
        x: FloatArray,
        residuals: FloatArray,
        hessians: FloatArray,
        weights: FloatArray,
        max_depth: int,
    ) -> RegressionTree:
        """Grows a least-squares tree on ``residuals`` and sets every leaf to
        ``sum(w r) / max(sum(w h), 1e-6)`` over its members."""

        def _grow(idx: np.ndarray, depth: int) -> RegressionNode:
            split = None
            if depth < max_depth and len(idx) >= 2:
                split = split_search(x[idx], residuals[idx], weights=weights[idx])
            if split is None:
                num = float((weights[idx] * residuals[idx]).sum())
                den = float((weights[idx] * hessians[idx]).sum())
                return RegressionLeaf(num / max(den, HESSIAN_FLOOR))
            left = x[idx, split.feature] <= split.threshold
            return RegressionSplit(
                split.feature,
                split.threshold,
                _grow(idx[left], depth + 1),
                _grow(idx[~left], depth + 1),
            )

        return cls(_grow(np.arange(len(x)), 0), max_depth)

    def nodes(self) -> Iterator[RegressionNode]:
        stack: list[RegressionNode] = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, RegressionSplit):
                stack.append(node.right)
                stack.append(node.left)

    @property
    def depth(self) -> int:
        def _depth(node: RegressionNode) -> int:
            if isinstance(node, RegressionLeaf):
                return 0
            return 1 + max(_depth(node.left), _depth(node.right))

        return _depth(self.root)

    def predict(self, x: npt.ArrayLike) -> FloatArray:
        points = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(len(points))
        stack: list[tuple[RegressionNode, np.ndarray]] = [
            (self.root, np.arange(len(points)))
        ]
        while stack:
            node, idx = stack.pop()
            if isinstance(node, RegressionLeaf):
                out[idx] = node.value
                continue
            left = points[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[left]))
            stack.append((node.right, idx[~left]))
        return out

    def to_tokens(self) -> list[str]:
        tokens: list[str] = []
        for node in self.nodes():
            if isinstance(node, RegressionSplit):
                tokens += ["S", str(node.feature), format_float(node.threshold)]
            else:
                tokens += ["L", format_float(node.value)]
        return tokens

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], max_depth: int) -> RegressionTree:
        it = iter(tokens)

        def _read() -> RegressionNode:
            kind = next(it)
            if kind == "L":
                return RegressionLeaf(parse_float(next(it)))
            if kind == "S":
                feature = int(next(it))
                threshold = parse_float(next(it))
                left = _read()
                return RegressionSplit(feature, threshold, left, _read())
            raise ParseError(f"Unknown regression tree token '{kind}'")

        try:
            root = _read()
        except StopIteration:
            raise ParseError("Truncated regression tree")
        if next(it, None) is not None:
            raise ParseError("Trailing tokens after regression tree")
        return cls(root, max_depth)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegressionTree):
            return NotImplemented
        return self.max_depth == other.max_depth and self.root == other.root

    def __repr__(self) -> str:
        return f"<RegressionTree depth={self.depth}/{self.max_depth}>"


class BoostedClassifier:
    """Additive model ``F(x) = F0 + learning_rate * sum_m tree_m(x)``.

    Args:
        initial_score : ``F0``, the log-odds of the clamped base rate.
        trees : The stage trees, at least one.
        learning_rate : Shrinkage ``nu`` in ``(0, 1]``.
        max_depth : Depth limit of the trees.
        n_features : Dimension of the inputs.
        training_loss : Optional training log-loss after each stage, index 0 being
            the ``F0``-only model.
        seed : Seed recorded with the model. The fit itself uses no randomness.
    """

    def __init__(
        self,
        initial_score: float,
        trees: list[RegressionTree],
        learning_rate: float,
        max_depth: int,
        n_features: int,
        training_loss: list[float] | None = None,
        seed: int = 0,
    ) -> None:
        if len(trees) < 1:
            raise ConfigurationError("A boosted classifier needs at least one tree")
        if not 0.0 < learning_rate <= 1.0:
            raise ConfigurationError(
                f"learning_rate must be in (0, 1], got {learning_rate}"
            )
        self.initial_score = float(initial_score)
        self.trees = trees
        self.learning_rate = float(learning_rate)
        self.max_depth = int(max_depth)
        self.n_features = int(n_features)
        self.training_loss = training_loss or []
        self.seed = seed

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _points(self, x: Any) -> FloatArray:
        points = np.atleast_2d(np.asarray(_as_points(x), dtype=np.float64))
        if points.shape[1] != self.n_features:
            raise DimensionMismatchError(self.n_features, int(points.shape[1]))
        return points

    def predict_raw(self, x: Sequence[ProbVector] | npt.ArrayLike) -> FloatArray:
        """Raw scores ``F0 + nu * sum(trees(x))``, one per row."""
        points = self._points(x)
        total = np.zeros(len(points))
        for tree in self.trees:
            total += tree.predict(points)
        return self.initial_score + self.learning_rate * total

    def predict_proba(self, x: Sequence[ProbVector] | npt.ArrayLike) -> FloatArray:
        """Probabilities of class 1, ``sigmoid(predict_raw(x))``."""
        return sigmoid(self.predict_raw(x))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BoostedClassifier):
            return NotImplemented
        return self.to_text() == other.to_text()

    def __repr__(self) -> str:
        return (
            f"<BoostedClassifier trees={self.n_trees} depth={self.max_depth} "
            f"nu={self.learning_rate}>"
        )

    def to_text(self) -> str:
        """Serializes the model: versioned header, ``F0``, ``nu`` and the other
        parameters, then one line of pre-order tokens per tree."""
        lines = [
            format_header(ObjectKind.GBM),
            f"initial_score {format_float(self.initial_score)}",
            f"learning_rate {format_float(self.learning_rate)}",
            f"max_depth {self.max_depth}",
            f"n_features {self.n_features}",
            f"seed {self.seed}",
            f"n_trees {self.n_trees}",
        ]
        for tree in self.trees:
            lines.append("tree " + " ".join(tree.to_tokens()))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> BoostedClassifier:
        body = split_body(text, ObjectKind.GBM)
        params: dict[str, str] = {}
        tokens: list[list[str]] = []
        for line in body:
            name, _, rest = line.partition(" ")
            if name == "tree":
                tokens.append(rest.split())
            else:
                params[name] = rest.strip()
        try:
            max_depth = int(params["max_depth"])
            trees = [RegressionTree.from_tokens(t, max_depth) for t in tokens]
            if int(params["n_trees"]) != len(trees):
                raise ParseError(
                    f"Model declares {params['n_trees']} trees but has {len(trees)}"
                )
            return BoostedClassifier(
                parse_float(params["initial_score"]),
                trees,
                parse_float(params["learning_rate"]),
                max_depth,
                int(params["n_features"]),
                seed=int(params["seed"]),
            )
        except KeyError as e:
            raise ParseError(f"Missing field {e} in boosted classifier text")
        except ValueError as e:
            raise ParseError(f"Invalid boosted classifier text: {e}")

    def save_object(self, dest_href: HREF, ood_io: OodIO | None = None) -> None:
        (ood_io or OodIO.default()).write_text(dest_href, self.to_text())

    @staticmethod
    def from_file(href: HREF, ood_io: OodIO | None = None) -> BoostedClassifier:
        return BoostedClassifier.from_text((ood_io or OodIO.default()).read_text(href))


def _as_points(x: Any) -> Any:
    if isinstance(x, ProbVector) or (
        isinstance(x, Sequence) and len(x) > 0 and isinstance(x[0], ProbVector)
    ):
        return as_prob_matrix(x)
    return x


def balanced_weights(y: npt.ArrayLike) -> FloatArray:
    """Sample weights giving both classes the same total weight, ``n / 2`` each."""
    labels = np.asarray(y)
    n = len(labels)
    n_pos = int((labels == 1).sum())
    counts = np.array([n - n_pos, n_pos], dtype=np.float64)
    return np.asarray(n / (2.0 * counts[labels.astype(np.int64)]), dtype=np.float64)


def fit(
    x: Sequence[ProbVector] | npt.ArrayLike,
    y: npt.ArrayLike,
    n_trees: int = 100,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    seed: int = 0,
    balance: bool = False,
    allow_single_class: bool = False,
) -> BoostedClassifier:
    """Fits a boosted classifier to binary labels (in-distribution 0, OOD 1).

    Args:
        x : Training points, probability vectors or rows of an array.
        y : Labels in ``{0, 1}``, one per point.
        n_trees : Number of stages, at least one.
        max_depth : Depth limit of each tree.
        learning_rate : Shrinkage ``nu`` in ``(0, 1]``.
        seed : Recorded with the model; the fit is deterministic.
        balance : Weight samples so both classes carry equal total weight.
        allow_single_class : Permit labels of a single class. The clamped base
            rate then drives the prediction.

    Raises:
        FitError : If the labels hold a single class (unless allowed), are not
            binary, do not match the number of points, or if any feature is NaN.
    """
    points = np.atleast_2d(np.asarray(_as_points(x), dtype=np.float64))
    labels = np.asarray(y, dtype=np.float64).ravel()
    if len(points) != len(labels):
        raise FitError(f"Got {len(points)} points but {len(labels)} labels")
    if len(labels) == 0:
        raise FitError("Cannot fit a boosted classifier on no data")
    if np.isnan(points).any():
        raise FitError("Features contain NaN")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise FitError("Labels must be 0 (in-distribution) or 1 (OOD)")
    if len(np.unique(labels)) < 2 and not allow_single_class:
        raise FitError("Both classes must be present to fit a boosted classifier")
    if n_trees < 1:
        raise ConfigurationError(f"n_trees must be >= 1, got {n_trees}")
    if max_depth < 1:
        raise ConfigurationError(f"max_depth must be >= 1, got {max_depth}")
    if not 0.0 < learning_rate <= 1.0:
        raise ConfigurationError(
            f"learning_rate must be in (0, 1], got {learning_rate}"
        )

    if balance and len(np.unique(labels)) == 2:
        weights = balanced_weights(labels)
    else:
        weights = np.ones(len(labels))
    base_rate = float((weights * labels).sum() / weights.sum())
    base_rate = min(max(base_rate, BASE_RATE_CLAMP), 1.0 - BASE_RATE_CLAMP)
    initial_score = float(np.log(base_rate / (1.0 - base_rate)))

    raw = np.full(len(labels), initial_score)
    losses = [log_loss(labels, raw, weights)]
    trees: list[RegressionTree] = []
    for stage in range(n_trees):
        p = sigmoid(raw)
        tree = RegressionTree.fit(points, labels - p, p * (1.0 - p), weights, max_depth)
        raw = raw + learning_rate * tree.predict(points)
        trees.append(tree)
        losses.append(log_loss(labels, raw, weights))
        logger.debug(f"stage {stage + 1}: training log-loss {losses[-1]:.6f}")
    return BoostedClassifier(
        initial_score,
        trees,
        learning_rate,
        max_depth,
        int(points.shape[1]),
        training_loss=losses,
        seed=seed,
    )
