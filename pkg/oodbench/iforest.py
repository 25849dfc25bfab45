"""Isolation Forest built from scratch on numpy.

Trees split on a uniformly chosen feature at a value drawn uniformly between the
feature's minimum and maximum over the points routed to the node. Points that are
isolated after few splits have a short expected path length and a high anomaly
score ``2 ** (-E[h(x)] / c(psi))``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Protocol, TypeAlias

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

#: Euler-Mascheroni constant used by :func:`expected_path_c`.
EULER_GAMMA = 0.5772156649

#: Default number of trees.
DEFAULT_N_TREES = 100

#: Upper bound of the default subsample size.
DEFAULT_MAX_SUBSAMPLE = 256


class RandomSource(Protocol):
    """The random choices tree construction needs. A :class:`numpy.random.Generator`
    satisfies it; tests substitute recording or replaying sources."""

    def integers(self, high: int) -> Any: ...

    def uniform(self, low: float, high: float) -> Any: ...


def expected_path_c(n: int) -> float:
    """Average path length of an unsuccessful search in a binary search tree of
    ``n`` points, used to normalize path lengths.

    ``c(0) = c(1) = 0``, ``c(2) = 1`` and, for ``n >= 3``,
    ``c(n) = 2 (ln(n - 1) + gamma) - 2 (n - 1) / n``.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


class IsolationLeaf:
    """A terminal node; ``size`` training points ended here."""

    def __init__(self, size: int) -> None:
        self.size = size

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IsolationLeaf) and other.size == self.size

    def __repr__(self) -> str:
        return f"<IsolationLeaf size={self.size}>"


class IsolationSplit:
    """An internal node; points with ``x[feature] < value`` go left."""

    def __init__(
        self, feature: int, value: float, left: IsolationNode, right: IsolationNode
    ) -> None:
        self.feature = feature
        self.value = value
        self.left = left
        self.right = right

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, IsolationSplit)
            and other.feature == self.feature
            and other.value == self.value
            and other.left == self.left
            and other.right == self.right
        )

    def __repr__(self) -> str:
        return f"<IsolationSplit x[{self.feature}] < {self.value}>"


IsolationNode: TypeAlias = IsolationLeaf | IsolationSplit


def _build(
    x: FloatArray, depth: int, height_limit: int, rng: RandomSource
) -> IsolationNode:
    n, d = x.shape
    if n <= 1 or depth >= height_limit or bool((x == x[0]).all()):
        return IsolationLeaf(n)
    for _ in range(d):
        feature = int(rng.integers(d))
        low = float(x[:, feature].min())
        high = float(x[:, feature].max())
        if low < high:
            break
    else:
        return IsolationLeaf(n)
    value = float(rng.uniform(low, high))
    if not low < value <= high:
        value = high
    goes_left = x[:, feature] < value
    return IsolationSplit(
        feature,
        value,
        _build(x[goes_left], depth + 1, height_limit, rng),
        _build(x[~goes_left], depth + 1, height_limit, rng),
    )


class IsolationTree:
    """A fitted isolation tree.

    Args:
        root : The root node.
        height_limit : Depth at which construction stopped, ``ceil(log2 psi)``.
    """

    root: IsolationNode
    height_limit: int

    def __init__(self, root: IsolationNode, height_limit: int) -> None:
        self.root = root
        self.height_limit = height_limit

    @classmethod
    def build(
        cls, x: npt.ArrayLike, height_limit: int, rng: RandomSource
    ) -> IsolationTree:
        """Builds a tree on all rows of ``x``.

        A node becomes a leaf when it holds at most one point, when all its points
        are identical, or at depth ``height_limit``. Features with zero range at a
        node are redrawn, up to ``d`` draws in total, before the node becomes a
        leaf.
        """
        points = np.asarray(x, dtype=np.float64)
        return cls(_build(points, 0, height_limit, rng), height_limit)

    def nodes(self) -> Iterator[IsolationNode]:
        """Pre-order iteration over the nodes."""
        stack: list[IsolationNode] = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, IsolationSplit):
                stack.append(node.right)
                stack.append(node.left)

    @property
    def n_nodes(self) -> int:
        return sum(1 for _ in self.nodes())

    @property
    def depth(self) -> int:
        def _depth(node: IsolationNode) -> int:
            if isinstance(node, IsolationLeaf):
                return 0
            return 1 + max(_depth(node.left), _depth(node.right))

        return _depth(self.root)

    def path_length(self, x: npt.ArrayLike) -> float:
        """Number of edges from the root to the leaf ``x`` reaches, plus
        ``c(leaf.size)`` for the subtree that was not built."""
        point = np.asarray(x, dtype=np.float64).ravel()
        node = self.root
        edges = 0
        while isinstance(node, IsolationSplit):
            node = node.left if point[node.feature] < node.value else node.right
            edges += 1
        return edges + expected_path_c(node.size)

    def path_lengths(self, x: npt.ArrayLike) -> FloatArray:
        """Vectorized :meth:`path_length` over the rows of ``x``."""
        points = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(len(points))
        stack: list[tuple[IsolationNode, np.ndarray, int]] = [
            (self.root, np.arange(len(points)), 0)
        ]
        while stack:
            node, idx, edges = stack.pop()
            if isinstance(node, IsolationLeaf):
                out[idx] = edges + expected_path_c(node.size)
                continue
            left = points[idx, node.feature] < node.value
            stack.append((node.left, idx[left], edges + 1))
            stack.append((node.right, idx[~left], edges + 1))
        return out

    def to_tokens(self) -> list[str]:
        """Pre-order tokens: ``S <feature> <value>`` for splits, ``L <size>`` for
        leaves."""
        tokens: list[str] = []
        for node in self.nodes():
            if isinstance(node, IsolationSplit):
                tokens += ["S", str(node.feature), format_float(node.value)]
            else:
                tokens += ["L", str(node.size)]
        return tokens

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], height_limit: int) -> IsolationTree:
        it = iter(tokens)

        def _read() -> IsolationNode:
            kind = next(it)
            if kind == "L":
                return IsolationLeaf(int(next(it)))
            if kind == "S":
                feature = int(next(it))
                value = parse_float(next(it))
                left = _read()
                return IsolationSplit(feature, value, left, _read())
            raise ParseError(f"Unknown isolation tree token '{kind}'")

        try:
            root = _read()
        except StopIteration:
            raise ParseError("Truncated isolation tree")
        if next(it, None) is not None:
            raise ParseError("Trailing tokens after isolation tree")
        return cls(root, height_limit)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IsolationTree):
            return NotImplemented
        return self.height_limit == other.height_limit and self.root == other.root

    def __repr__(self) -> str:
        return f"<IsolationTree nodes={self.n_nodes} limit={self.height_limit}>"


class IsolationForest:
    """An ensemble of isolation trees.

    Args:
        trees : The fitted trees, at least one.
        subsample_size : Points each tree was built on, ``psi >= 2``.
        seed : Seed the forest was fit with.
        n_features : Dimension of the points.
    """

    def __init__(
        self,
        trees: list[IsolationTree],
        subsample_size: int,
        seed: int,
        n_features: int,
    ) -> None:
        if len(trees) < 1:
            raise ConfigurationError("An isolation forest needs at least one tree")
        if subsample_size < 2:
            raise ConfigurationError(
                f"subsample_size must be >= 2, got {subsample_size}"
            )
        self.trees = trees
        self.subsample_size = subsample_size
        self.seed = seed
        self.n_features = n_features

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def normalizer(self) -> float:
        """``c(psi)``, the average path length the scores are normalized by."""
        return expected_path_c(self.subsample_size)

    def _points(self, x: Sequence[ProbVector] | npt.ArrayLike) -> FloatArray:
        points = np.atleast_2d(np.asarray(_as_points(x), dtype=np.float64))
        if points.shape[1] != self.n_features:
            raise DimensionMismatchError(self.n_features, int(points.shape[1]))
        return points

    def mean_path_lengths(self, x: Sequence[ProbVector] | npt.ArrayLike) -> FloatArray:
        """``E[h(x)]``, the mean path length over the trees, per row of ``x``."""
        points = self._points(x)
        total = np.zeros(len(points))
        for tree in self.trees:
            total += tree.path_lengths(points)
        return total / self.n_trees

    def score_samples(self, x: Sequence[ProbVector] | npt.ArrayLike) -> FloatArray:
        """Anomaly scores in ``(0, 1]``; larger means more anomalous."""
        return score_from_path_length(self.mean_path_lengths(x), self.subsample_size)

    def anomaly_score(self, x: ProbVector | npt.ArrayLike) -> float:
        """Anomaly score of a single point."""
        return float(self.score_samples(x)[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IsolationForest):
            return NotImplemented
        return (
            self.subsample_size == other.subsample_size
            and self.seed == other.seed
            and self.n_features == other.n_features
            and self.trees == other.trees
        )

    def __repr__(self) -> str:
        return (
            f"<IsolationForest t={self.n_trees} psi={self.subsample_size} "
            f"seed={self.seed}>"
        )

    def to_text(self) -> str:
        """Serializes the forest: a versioned header, the forest parameters, then
        one line per tree holding its height limit and pre-order node tokens."""
        lines = [
            format_header(ObjectKind.FOREST),
            f"n_trees {self.n_trees}",
            f"subsample_size {self.subsample_size}",
            f"seed {self.seed}",
            f"n_features {self.n_features}",
        ]
        for tree in self.trees:
            lines.append(f"tree {tree.height_limit} " + " ".join(tree.to_tokens()))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> IsolationForest:
        body = split_body(text, ObjectKind.FOREST)
        params: dict[str, int] = {}
        trees: list[IsolationTree] = []
        try:
            for line in body:
                name, _, rest = line.partition(" ")
                if name == "tree":
                    tokens = rest.split()
                    trees.append(IsolationTree.from_tokens(tokens[1:], int(tokens[0])))
                else:
                    params[name] = int(rest)
            expected = params["n_trees"]
            forest = IsolationForest(
                trees,
                params["subsample_size"],
                params["seed"],
                params["n_features"],
            )
        except KeyError as e:
            raise ParseError(f"Missing field {e} in forest text")
        except (ValueError, IndexError) as e:
            raise ParseError(f"Invalid forest text: {e}")
        if expected != len(trees):
            raise ParseError(f"Forest declares {expected} trees but has {len(trees)}")
        return forest

    def save_object(self, dest_href: HREF, ood_io: OodIO | None = None) -> None:
        (ood_io or OodIO.default()).write_text(dest_href, self.to_text())

    @staticmethod
    def from_file(href: HREF, ood_io: OodIO | None = None) -> IsolationForest:
        return IsolationForest.from_text((ood_io or OodIO.default()).read_text(href))


def score_from_path_length(
    mean_path_length: npt.ArrayLike, subsample_size: int
) -> FloatArray:
    """``2 ** (-E[h] / c(psi))``."""
    c = expected_path_c(subsample_size)
    return np.asarray(
        np.power(2.0, -np.asarray(mean_path_length, dtype=np.float64) / c),
        dtype=np.float64,
    )


def _as_points(x: Any) -> Any:
    if isinstance(x, ProbVector) or (
        isinstance(x, Sequence) and len(x) > 0 and isinstance(x[0], ProbVector)
    ):
        return as_prob_matrix(x)
    return x


def fit(
    data: Sequence[ProbVector] | npt.ArrayLike,
    n_trees: int = DEFAULT_N_TREES,
    subsample_size: int | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> IsolationForest:
    """Fits an isolation forest.

    Each tree gets its own generator spawned from ``seed``, draws a subsample of
    ``subsample_size`` points without replacement and is built to height
    ``ceil(log2 subsample_size)``. Results do not depend on ``n_jobs``.

    Args:
        data : At least two points of equal dimension; probability vectors or rows
            of an array.
        n_trees : Number of trees ``t >= 1``.
        subsample_size : ``psi``, defaults to ``min(256, n)``.
        seed : Seed of the forest.
        n_jobs : Number of threads building trees.

    Raises:
        FitError : If fewer than two points are given or any value is not finite.
        ConfigurationError : If ``n_trees`` or ``subsample_size`` is out of range.
    """
    points = np.asarray(_as_points(data), dtype=np.float64)
    if points.ndim != 2:
        raise FitError(f"Expected a 2-D array of points, got shape {points.shape}")
    n = len(points)
    if n < 2:
        raise FitError(f"An isolation forest needs at least 2 points, got {n}")
    if not np.isfinite(points).all():
        raise FitError("Points must be finite")
    if n_trees < 1:
        raise ConfigurationError(f"n_trees must be >= 1, got {n_trees}")
    psi = min(DEFAULT_MAX_SUBSAMPLE, n) if subsample_size is None else subsample_size
    if not 2 <= psi <= n:
        raise ConfigurationError(f"subsample_size must be in [2, {n}], got {psi}")
    height_limit = math.ceil(math.log2(psi))

    def _tree(child: np.random.SeedSequence) -> IsolationTree:
        rng = np.random.default_rng(child)
        idx = rng.choice(n, size=psi, replace=False)
        return IsolationTree.build(points[idx], height_limit, rng)

    children = np.random.SeedSequence(seed).spawn(n_trees)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(_tree, children))
    else:
        trees = [_tree(child) for child in children]
    logger.debug(
        f"Fit isolation forest: {n_trees} trees, psi={psi}, limit={height_limit}"
    )
    return IsolationForest(trees, psi, seed, int(points.shape[1]))
