import math
import unittest
from pathlib import Path

import numpy as np
import pytest

from oodbench import BoostedClassifier, ProbVector
from oodbench.errors import (
    ConfigurationError,
    DimensionMismatchError,
    FitError,
    ParseError,
)
from oodbench.gbm import (
    RegressionLeaf,
    RegressionSplit,
    RegressionTree,
    balanced_weights,
    fit,
    log_loss,
    sigmoid,
    split_search,
)
from tests.utils import MockOodIO, TestCases


def brute_force_gain(x: np.ndarray, r: np.ndarray, feature: int, t: float) -> float:
    left = x[:, feature] <= t
    total = ((r - r.mean()) ** 2).sum()
    parts = ((r[left] - r[left].mean()) ** 2).sum()
    parts += ((r[~left] - r[~left].mean()) ** 2).sum()
    return float((total - parts) / len(r))


class SplitSearchTest(unittest.TestCase):
    def test_stump(self) -> None:
        split = split_search([[0.0], [1.0]], [-1.0, 1.0])
        assert split is not None
        self.assertEqual(split.feature, 0)
        self.assertEqual(split.threshold, 0.5)
        self.assertAlmostEqual(split.gain, 1.0)

    def test_matches_brute_force(self) -> None:
        rng = np.random.default_rng(0)
        for _ in range(25):
            x = rng.integers(0, 6, (12, 3)).astype(float)
            r = rng.standard_normal(12)
            split = split_search(x, r)
            assert split is not None
            best = max(
                brute_force_gain(x, r, f, t)
                for f in range(3)
                for t in np.unique(x[:, f])[:-1] + 0.5
            )
            self.assertAlmostEqual(split.gain, best)
            self.assertAlmostEqual(
                brute_force_gain(x, r, split.feature, split.threshold), best
            )

    def test_ties_prefer_lowest_feature_then_threshold(self) -> None:
        x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        split = split_search(x, [1.0, -1.0, -1.0, 1.0])
        assert split is not None
        self.assertEqual(split.feature, 0)
        self.assertEqual(split.threshold, 0.5)

    def test_no_split_without_gain(self) -> None:
        self.assertIsNone(split_search([[1.0], [1.0], [1.0]], [0.1, -0.3, 0.2]))
        self.assertIsNone(split_search([[0.0], [1.0], [2.0]], [0.5, 0.5, 0.5]))
        self.assertIsNone(split_search([[0.0]], [1.0]))

    def test_feature_subset(self) -> None:
        x = np.array([[0.0, 5.0], [1.0, 5.0], [0.0, 6.0], [1.0, 6.0]])
        split = split_search(x, [-1.0, 1.0, -1.0, 1.0], features=[1])
        self.assertIsNone(split)


def test_sigmoid_is_stable() -> None:
    values = sigmoid([-1000.0, 0.0, 1000.0])
    np.testing.assert_array_equal(values, [0.0, 0.5, 1.0])


def test_log_loss_at_zero_is_log_two() -> None:
    assert log_loss([0, 1, 1], [0.0, 0.0, 0.0]) == pytest.approx(math.log(2))


def test_balanced_weights() -> None:
    w = balanced_weights([0, 0, 0, 1])
    np.testing.assert_allclose(w, [2 / 3, 2 / 3, 2 / 3, 2.0])
    assert w[:3].sum() == pytest.approx(w[3:].sum())


class FitTest(unittest.TestCase):
    def test_separable_data(self) -> None:
        x = np.arange(6.0).reshape(-1, 1)
        y = np.array([0, 0, 0, 1, 1, 1])
        model = fit(x, y, n_trees=50, max_depth=1, learning_rate=0.5)
        proba = model.predict_proba(x)
        self.assertTrue((proba[:3] < 0.1).all())
        self.assertTrue((proba[3:] > 0.9).all())
        first = model.trees[0].root
        assert isinstance(first, RegressionSplit)
        self.assertEqual(first.threshold, 2.5)

    def test_training_loss_decreases(self) -> None:
        rng = np.random.default_rng(1)
        x = rng.standard_normal((80, 2))
        y = (x[:, 0] + 0.5 * rng.standard_normal(80) > 0).astype(int)
        model = fit(x, y, n_trees=30, max_depth=2)
        losses = np.array(model.training_loss)
        self.assertEqual(len(losses), 31)
        base = np.log(y.mean() / (1 - y.mean()))
        self.assertAlmostEqual(losses[0], log_loss(y, np.full(80, base)))
        self.assertTrue((np.diff(losses) <= 1e-12).all())

    def test_initial_score_is_base_rate_log_odds(self) -> None:
        x = np.arange(10.0).reshape(-1, 1)
        y = np.array([1, 1, 0, 0, 0, 0, 0, 0, 0, 0])
        model = fit(x, y, n_trees=1)
        self.assertAlmostEqual(model.initial_score, math.log(0.2 / 0.8))
        balanced = fit(x, y, n_trees=1, balance=True)
        self.assertAlmostEqual(balanced.initial_score, 0.0)

    def test_single_class(self) -> None:
        x = np.random.default_rng(2).random((10, 2))
        with self.assertRaises(FitError):
            fit(x, np.ones(10))
        model = fit(x, np.ones(10), n_trees=3, allow_single_class=True)
        self.assertTrue((model.predict_proba(x) > 0.99).all())

    def test_invalid_input(self) -> None:
        x = np.zeros((4, 2))
        with self.assertRaises(FitError):
            fit(x, [0, 1, 0])
        with self.assertRaises(FitError):
            fit(x, [0, 1, 2, 0])
        with self.assertRaises(FitError):
            fit([[np.nan, 0.0], [0.0, 0.0]], [0, 1])
        with self.assertRaises(ConfigurationError):
            fit(x, [0, 1, 0, 1], n_trees=0)
        with self.assertRaises(ConfigurationError):
            fit(x, [0, 1, 0, 1], learning_rate=1.5)

    def test_accepts_prob_vectors(self) -> None:
        probs = TestCases.one_hot_probs(30)
        diffuse = TestCases.diffuse_probs(30)
        points = [ProbVector(p) for p in np.vstack([probs, diffuse])]
        model = fit(points, [0] * 30 + [1] * 30, n_trees=20)
        self.assertEqual(model.n_features, 3)
        self.assertLess(model.predict_proba(probs).mean(), 0.5)
        self.assertGreater(model.predict_proba(diffuse).mean(), 0.5)
        with self.assertRaises(DimensionMismatchError):
            model.predict_proba(np.zeros((1, 2)))

    def test_fit_is_deterministic(self) -> None:
        x = np.random.default_rng(3).random((40, 3))
        y = (x[:, 1] > 0.5).astype(int)
        self.assertEqual(fit(x, y, n_trees=5), fit(x, y, n_trees=5))


class TextFormatTest(unittest.TestCase):
    def test_reads_hand_written_stump(self) -> None:
        model = BoostedClassifier.from_file(
            TestCases.get_path("data-files/models/stump.gbm.txt")
        )
        self.assertEqual(model.n_trees, 1)
        self.assertEqual(
            model.trees[0].root,
            RegressionSplit(0, 0.5, RegressionLeaf(-2.0), RegressionLeaf(2.0)),
        )
        np.testing.assert_allclose(
            model.predict_raw([[0.2], [0.5], [0.7]]), [-2.0, -2.0, 2.0]
        )
        expected = 1 / (1 + math.exp(-2))
        self.assertAlmostEqual(model.predict_proba([[0.7]])[0], expected)

    def test_text_is_exact(self) -> None:
        x = np.random.default_rng(4).random((30, 2))
        y = (x.sum(axis=1) > 1).astype(int)
        model = fit(x, y, n_trees=8, max_depth=3, seed=5)
        again = BoostedClassifier.from_text(model.to_text())
        self.assertEqual(again, model)
        np.testing.assert_array_equal(again.predict_raw(x), model.predict_raw(x))

    def test_tree_count_mismatch(self) -> None:
        text = "\n".join(
            [
                "oodbench-gbm 1",
                "initial_score 0.0",
                "learning_rate 1.0",
                "max_depth 1",
                "n_features 1",
                "seed 0",
                "n_trees 2",
                "tree L 1.0",
            ]
        )
        with self.assertRaises(ParseError):
            BoostedClassifier.from_text(text)

    def test_bad_tokens(self) -> None:
        with self.assertRaises(ParseError):
            RegressionTree.from_tokens(["S", "0", "0.5", "L", "1.0"], 1)
        with self.assertRaises(ParseError):
            RegressionTree.from_tokens(["Q"], 1)


def test_gbm_file_round_trip(tmp_path: Path) -> None:
    x = np.random.default_rng(5).random((20, 2))
    model = fit(x, (x[:, 0] > 0.5).astype(int), n_trees=2)
    ood_io = MockOodIO()
    href = str(tmp_path / "gbm.txt")
    model.save_object(href, ood_io)
    assert BoostedClassifier.from_file(href, ood_io) == model
    ood_io.mock.write_text.assert_called_once()
