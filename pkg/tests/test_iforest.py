import math
import unittest
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from oodbench import IsolationForest, ProbVector
from oodbench.errors import (
    ConfigurationError,
    DimensionMismatchError,
    FitError,
    ParseError,
    UnknownFormatError,
)
from oodbench.iforest import (
    EULER_GAMMA,
    IsolationLeaf,
    IsolationSplit,
    IsolationTree,
    expected_path_c,
    fit,
    score_from_path_length,
)
from tests.utils import MockOodIO


class ScriptedSource:
    """Replays fixed feature choices and split values."""

    def __init__(self, features: list[int], values: list[float]) -> None:
        self.features = iter(features)
        self.values = iter(values)

    def integers(self, high: int) -> Any:
        return next(self.features)

    def uniform(self, low: float, high: float) -> Any:
        return next(self.values)


class RecordingSource:
    """Draws from a numpy generator and records every draw."""

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng
        self.features: list[int] = []
        self.values: list[float] = []

    def integers(self, high: int) -> Any:
        self.features.append(int(self.rng.integers(high)))
        return self.features[-1]

    def uniform(self, low: float, high: float) -> Any:
        self.values.append(float(self.rng.uniform(low, high)))
        return self.values[-1]


def reference_tree(
    points: list[list[float]], depth: int, limit: int, source: ScriptedSource
) -> tuple[Any, ...]:
    """Plain recursive isolation-tree construction over lists."""
    if len(points) <= 1 or depth >= limit or all(p == points[0] for p in points):
        return ("leaf", len(points))
    d = len(points[0])
    for _ in range(d):
        feature = int(source.integers(d))
        column = [p[feature] for p in points]
        if min(column) < max(column):
            break
    else:
        return ("leaf", len(points))
    low, high = min(column), max(column)
    value = float(source.uniform(low, high))
    if value <= low or value > high:
        value = high
    left = [p for p in points if p[feature] < value]
    right = [p for p in points if p[feature] >= value]
    return (
        "split",
        feature,
        value,
        reference_tree(left, depth + 1, limit, source),
        reference_tree(right, depth + 1, limit, source),
    )


def reference_path(node: tuple[Any, ...], query: list[float], depth: int = 0) -> float:
    if node[0] == "leaf":
        size = node[1]
        if size <= 1:
            return float(depth)
        if size == 2:
            return depth + 1.0
        return depth + 2 * (math.log(size - 1) + EULER_GAMMA) - 2 * (size - 1) / size
    _, feature, value, left, right = node
    child = left if query[feature] < value else right
    return reference_path(child, query, depth + 1)


class ExpectedPathTest(unittest.TestCase):
    def test_small_values(self) -> None:
        self.assertEqual(expected_path_c(0), 0.0)
        self.assertEqual(expected_path_c(1), 0.0)
        self.assertEqual(expected_path_c(2), 1.0)

    def test_three(self) -> None:
        expected = 2 * (math.log(2) + EULER_GAMMA) - 4 / 3
        self.assertAlmostEqual(expected_path_c(3), expected)
        self.assertAlmostEqual(expected_path_c(3), 1.2074, places=4)

    def test_increasing(self) -> None:
        values = [expected_path_c(n) for n in range(1, 300)]
        self.assertTrue(all(a < b for a, b in zip(values, values[1:])))

    def test_negative(self) -> None:
        with self.assertRaises(ValueError):
            expected_path_c(-1)


@pytest.mark.parametrize("psi", [2, 3, 16, 256])
def test_path_length_equal_to_normalizer_scores_one_half(psi: int) -> None:
    assert score_from_path_length(expected_path_c(psi), psi) == 0.5


def test_scores_lie_in_unit_interval() -> None:
    scores = score_from_path_length([0.0, 1.0, 5.0, 100.0], 64)
    assert scores[0] == 1.0
    assert ((scores > 0) & (scores <= 1)).all()
    assert (np.diff(scores) < 0).all()


class IsolationTreeTest(unittest.TestCase):
    def test_scripted_tree(self) -> None:
        points = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 6.0], [3.0, 7.0]])
        source = ScriptedSource([0, 0, 0], [1.5, 0.5, 2.5])
        tree = IsolationTree.build(points, 2, source)
        expected = IsolationSplit(
            0,
            1.5,
            IsolationSplit(0, 0.5, IsolationLeaf(1), IsolationLeaf(1)),
            IsolationSplit(0, 2.5, IsolationLeaf(1), IsolationLeaf(1)),
        )
        self.assertEqual(tree.root, expected)
        self.assertEqual(tree.depth, 2)
        self.assertEqual(tree.n_nodes, 7)
        self.assertEqual(tree.to_tokens()[:3], ["S", "0", "1.5"])
        self.assertEqual(tree.path_length([0.2, 5.0]), 2.0)
        self.assertEqual(tree.path_length([2.0, 6.0]), 2.0)

    def test_matches_recursive_reference(self) -> None:
        rng = np.random.default_rng(21)
        for trial in range(200):
            n = int(rng.integers(2, 7))
            d = int(rng.integers(1, 4))
            if trial % 2:
                points = rng.integers(0, 3, (n, d)).astype(np.float64)
            else:
                points = rng.random((n, d))
            limit = math.ceil(math.log2(n))
            recorder = RecordingSource(np.random.default_rng(trial))
            tree = IsolationTree.build(points, limit, recorder)
            replay = ScriptedSource(recorder.features, recorder.values)
            reference = reference_tree(points.tolist(), 0, limit, replay)
            self.assertIsNone(next(replay.features, None))
            self.assertIsNone(next(replay.values, None))
            queries = np.vstack([points, 3 * rng.random((5, d)) - 0.5])
            expected = [reference_path(reference, q.tolist()) for q in queries]
            np.testing.assert_allclose(
                tree.path_lengths(queries), expected, rtol=0, atol=1e-12
            )

    def test_unbuilt_subtree_adds_expected_path(self) -> None:
        points = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 6.0], [3.0, 7.0]])
        tree = IsolationTree.build(points, 1, ScriptedSource([0], [1.5]))
        self.assertEqual(
            tree.root, IsolationSplit(0, 1.5, IsolationLeaf(2), IsolationLeaf(2))
        )
        self.assertEqual(tree.path_length([0.0, 5.0]), 1 + expected_path_c(2))

    def test_zero_range_feature_is_redrawn(self) -> None:
        points = np.array([[1.0, 0.0], [1.0, 4.0]])
        source = ScriptedSource([0, 1], [2.0])
        tree = IsolationTree.build(points, 1, source)
        self.assertEqual(
            tree.root, IsolationSplit(1, 2.0, IsolationLeaf(1), IsolationLeaf(1))
        )

    def test_one_split_path(self) -> None:
        tree = IsolationTree.build([[0.0], [1.0]], 1, np.random.default_rng(0))
        self.assertEqual(tree.path_length([0.0]), 1.0)
        self.assertEqual(tree.path_length([1.0]), 1.0)

    def test_identical_points_give_a_single_leaf(self) -> None:
        tree = IsolationTree.build(np.ones((5, 3)), 3, np.random.default_rng(0))
        self.assertEqual(tree.root, IsolationLeaf(5))
        self.assertAlmostEqual(tree.path_length([1.0, 1.0, 1.0]), expected_path_c(5))

    def test_node_count_bound(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(20):
            points = rng.standard_normal((4, 2))
            tree = IsolationTree.build(points, 2, rng)
            self.assertLessEqual(tree.n_nodes, 7)
            self.assertLessEqual(tree.depth, 2)
            leaves = [n for n in tree.nodes() if isinstance(n, IsolationLeaf)]
            self.assertEqual(sum(leaf.size for leaf in leaves), 4)

    def test_vectorized_paths_match(self) -> None:
        rng = np.random.default_rng(5)
        tree = IsolationTree.build(rng.standard_normal((32, 3)), 5, rng)
        queries = rng.standard_normal((20, 3))
        np.testing.assert_array_equal(
            tree.path_lengths(queries), [tree.path_length(q) for q in queries]
        )

    def test_token_errors(self) -> None:
        with self.assertRaises(ParseError):
            IsolationTree.from_tokens(["S", "0", "0.5", "L", "1"], 1)
        with self.assertRaises(ParseError):
            IsolationTree.from_tokens(["L", "1", "L", "1"], 1)
        with self.assertRaises(ParseError):
            IsolationTree.from_tokens(["X"], 1)


class FitTest(unittest.TestCase):
    def test_outlier_is_isolated(self) -> None:
        rng = np.random.default_rng(0)
        separated = 0
        for seed in range(20):
            inliers = rng.uniform(-0.01, 0.01, (9, 1))
            data = np.vstack([inliers, [[10.0]]])
            forest = fit(data, n_trees=100, seed=seed)
            scores = forest.score_samples(data)
            if scores[-1] > scores[:-1].max():
                separated += 1
        self.assertGreaterEqual(separated, 19)

    def test_row_order_does_not_matter(self) -> None:
        rng = np.random.default_rng(6)
        data = rng.random((30, 3))
        shuffled = data[rng.permutation(30)]
        a = fit(data, n_trees=20, subsample_size=30, seed=4)
        b = fit(shuffled, n_trees=20, subsample_size=30, seed=4)
        self.assertEqual(a, b)
        queries = rng.random((15, 3))
        np.testing.assert_array_equal(
            a.score_samples(queries), b.score_samples(queries)
        )

    def test_defaults(self) -> None:
        data = np.random.default_rng(1).random((40, 3))
        forest = fit(data, n_trees=5)
        self.assertEqual(forest.subsample_size, 40)
        self.assertEqual(forest.n_trees, 5)
        self.assertEqual(forest.trees[0].height_limit, 6)
        self.assertAlmostEqual(forest.normalizer, expected_path_c(40))

    def test_same_seed_same_forest(self) -> None:
        data = np.random.default_rng(2).random((100, 2))
        a = fit(data, n_trees=10, subsample_size=32, seed=7)
        self.assertEqual(a, fit(data, n_trees=10, subsample_size=32, seed=7))
        self.assertNotEqual(a, fit(data, n_trees=10, subsample_size=32, seed=8))

    def test_threads_do_not_change_the_forest(self) -> None:
        data = np.random.default_rng(3).random((100, 2))
        serial = fit(data, n_trees=16, seed=1)
        threaded = fit(data, n_trees=16, seed=1, n_jobs=4)
        self.assertEqual(serial, threaded)

    def test_accepts_prob_vectors(self) -> None:
        probs = [ProbVector([p, 1 - p]) for p in np.linspace(0.1, 0.9, 9)]
        forest = fit(probs, n_trees=5)
        self.assertEqual(forest.n_features, 2)
        score = forest.anomaly_score(ProbVector([0.5, 0.5]))
        self.assertTrue(0 < score <= 1)

    def test_invalid_input(self) -> None:
        with self.assertRaises(FitError):
            fit([[0.5, 0.5]])
        with self.assertRaises(FitError):
            fit([[0.5, np.nan], [0.1, 0.9]])
        with self.assertRaises(FitError):
            fit([0.1, 0.2, 0.3])
        with self.assertRaises(ConfigurationError):
            fit(np.zeros((10, 2)), n_trees=0)
        with self.assertRaises(ConfigurationError):
            fit(np.zeros((10, 2)), subsample_size=11)

    def test_query_dimension(self) -> None:
        forest = fit(np.random.default_rng(0).random((10, 2)), n_trees=2)
        with self.assertRaises(DimensionMismatchError):
            forest.score_samples(np.zeros((1, 3)))


class ForestTextTest(unittest.TestCase):
    def setUp(self) -> None:
        self.forest = fit(np.random.default_rng(4).random((50, 3)), 8, 16, seed=2)

    def test_text_is_exact(self) -> None:
        text = self.forest.to_text()
        self.assertTrue(text.startswith("oodbench-forest 1\n"))
        again = IsolationForest.from_text(text)
        self.assertEqual(again, self.forest)
        queries = np.random.default_rng(5).random((10, 3))
        np.testing.assert_array_equal(
            again.score_samples(queries), self.forest.score_samples(queries)
        )

    def test_tree_count_mismatch(self) -> None:
        text = self.forest.to_text().replace("n_trees 8", "n_trees 9")
        with self.assertRaisesRegex(ParseError, "9 trees"):
            IsolationForest.from_text(text)

    def test_wrong_header(self) -> None:
        with self.assertRaises(UnknownFormatError):
            IsolationForest.from_text("oodbench-model 1\nlayers 2 2 2\n")


def test_forest_file_round_trip(tmp_path: Path) -> None:
    forest = fit(np.random.default_rng(6).random((20, 2)), n_trees=3)
    ood_io = MockOodIO()
    href = str(tmp_path / "forest.txt")
    forest.save_object(href, ood_io)
    assert IsolationForest.from_file(href, ood_io) == forest
    ood_io.mock.read_text.assert_called_once_with(href)
