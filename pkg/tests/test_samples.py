import math
import unittest

import numpy as np
import pytest

from oodbench import FeatureVector, LabeledSample, ProbVector
from oodbench.errors import DimensionMismatchError, InvalidProbVectorError
from oodbench.samples import (
    as_feature_matrix,
    as_prob_matrix,
    check_prob_matrix,
    feature_vectors,
    prob_vectors,
)


class ProbVectorTest(unittest.TestCase):
    def test_accessors(self) -> None:
        p = ProbVector([0.7, 0.2, 0.1])
        self.assertEqual(p.n_classes, 3)
        self.assertEqual(len(p), 3)
        self.assertEqual(p.max(), 0.7)
        self.assertEqual(p.argmax(), 0)
        self.assertEqual(p[1], 0.2)
        self.assertEqual(list(p), [0.7, 0.2, 0.1])

    def test_probs_are_read_only(self) -> None:
        p = ProbVector([0.5, 0.5])
        with self.assertRaises(ValueError):
            p.probs[0] = 1.0

    def test_uniform_has_maximal_entropy(self) -> None:
        for m in (2, 3, 10):
            p = ProbVector.uniform(m)
            self.assertAlmostEqual(p.entropy(), math.log(m))
            self.assertAlmostEqual(p.max(), 1.0 / m)

    def test_one_hot_has_zero_entropy(self) -> None:
        p = ProbVector.one_hot(2, 4)
        self.assertEqual(p.argmax(), 2)
        self.assertEqual(p.entropy(), 0.0)

    def test_sum_tolerance(self) -> None:
        ProbVector([0.5, 0.5 + 5e-7])
        with self.assertRaises(InvalidProbVectorError):
            ProbVector([0.5, 0.5 + 5e-6])

    def test_rejects_invalid_vectors(self) -> None:
        for bad in (
            [1.0],
            [1.2, -0.2],
            [0.5, float("nan")],
            [[0.5, 0.5]],
            [0.3, 0.3],
        ):
            with self.subTest(bad=bad):
                with self.assertRaises(InvalidProbVectorError):
                    ProbVector(bad)

    def test_invalid_prob_vector_is_a_value_error(self) -> None:
        with self.assertRaises(ValueError):
            ProbVector([0.9, 0.9])

    def test_equality_and_hash(self) -> None:
        a = ProbVector([0.25, 0.75])
        b = ProbVector([0.25, 0.75])
        self.assertEqual(a, b)
        self.assertEqual(hash(a), hash(b))
        self.assertNotEqual(a, ProbVector([0.75, 0.25]))
        self.assertIn("0.25", repr(a))


class CheckProbMatrixTest(unittest.TestCase):
    def test_reports_first_bad_row(self) -> None:
        probs = [[0.5, 0.5], [0.2, 0.8], [0.7, 0.6], [2.0, -1.0]]
        with self.assertRaisesRegex(InvalidProbVectorError, "Row 2"):
            check_prob_matrix(probs)

    def test_empty_batch(self) -> None:
        self.assertEqual(check_prob_matrix(np.zeros((0, 3))).shape, (0, 3))

    def test_one_row_is_promoted(self) -> None:
        self.assertEqual(check_prob_matrix([0.1, 0.9]).shape, (1, 2))


class FeatureVectorTest(unittest.TestCase):
    def test_values(self) -> None:
        v = FeatureVector([1.0, -2.5])
        self.assertEqual(v.dim, 2)
        self.assertEqual(v.to_list(), [1.0, -2.5])
        self.assertEqual(v[1], -2.5)
        self.assertEqual(v, FeatureVector([1, -2.5]))

    def test_rejects_non_finite(self) -> None:
        with self.assertRaises(ValueError):
            FeatureVector([1.0, float("inf")])

    def test_rejects_empty_or_matrix(self) -> None:
        with self.assertRaises(ValueError):
            FeatureVector([])
        with self.assertRaises(ValueError):
            FeatureVector([[1.0, 2.0]])


class LabeledSampleTest(unittest.TestCase):
    def test_accepts_raw_features(self) -> None:
        s = LabeledSample([0.5, 1.5], 1, n_classes=2)
        self.assertEqual(s.features, FeatureVector([0.5, 1.5]))
        self.assertEqual(s.label, 1)

    def test_label_range(self) -> None:
        with self.assertRaises(ValueError):
            LabeledSample([0.0, 0.0], -1)
        with self.assertRaises(ValueError):
            LabeledSample([0.0, 0.0], 3, n_classes=3)


def test_as_feature_matrix_stacks_vectors() -> None:
    x = as_feature_matrix([FeatureVector([1, 2]), FeatureVector([3, 4])])
    np.testing.assert_array_equal(x, [[1, 2], [3, 4]])


def test_as_feature_matrix_promotes_single_vector() -> None:
    assert as_feature_matrix(FeatureVector([1, 2, 3])).shape == (1, 3)
    assert as_feature_matrix([1.0, 2.0]).shape == (1, 2)


def test_as_feature_matrix_checks_dimension() -> None:
    with pytest.raises(DimensionMismatchError) as excinfo:
        as_feature_matrix(np.zeros((4, 3)), dim=2)
    assert excinfo.value.expected == 2
    assert excinfo.value.actual == 3


def test_as_prob_matrix_rejects_mixed_class_counts() -> None:
    with pytest.raises(DimensionMismatchError):
        as_prob_matrix([ProbVector.uniform(2), ProbVector.uniform(3)])


def test_vector_splitters() -> None:
    probs = prob_vectors([[0.5, 0.5], [1.0, 0.0]])
    assert [p.argmax() for p in probs] == [0, 0]
    features = feature_vectors(np.arange(6.0).reshape(3, 2))
    assert features[2] == FeatureVector([4.0, 5.0])
