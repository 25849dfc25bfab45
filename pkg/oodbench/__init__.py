# isort: skip_file
"""
oodbench is a library for detecting and benchmarking out-of-distribution inputs
from the softmax outputs of a classifier.
"""

__all__ = [
    "__version__",
    "OodBenchError",
    "ConfigurationError",
    "ConfigValidationError",
    "DimensionMismatchError",
    "InvalidProbVectorError",
    "ParseError",
    "UnknownFormatError",
    "FitError",
    "TrainingError",
    "CalibrationError",
    "NotFittedError",
    "BenchmarkStageError",
    "OodIO",
    "ProbVector",
    "FeatureVector",
    "LabeledSample",
    "DatasetSpec",
    "OodPoolSpec",
    "PoolMode",
    "Split",
    "SplitDataset",
    "OodPool",
    "generate_synthetic",
    "generate_ood_pool",
    "CsvSchema",
    "load_csv",
    "save_csv",
    "SoftmaxClassifier",
    "TrainConfig",
    "IsolationForest",
    "BoostedClassifier",
    "Detector",
    "DetectorKind",
    "Decision",
    "Verdict",
    "ScorePair",
    "MetricsRow",
    "EvalReport",
    "BenchmarkConfig",
    "Method",
    "run_benchmark",
    "run_sweep",
    "read_file",
    "read_text",
    "write_file",
]

import os
from typing import Union

from oodbench.errors import (
    OodBenchError,
    ConfigurationError,
    ConfigValidationError,
    DimensionMismatchError,
    InvalidProbVectorError,
    ParseError,
    UnknownFormatError,
    FitError,
    TrainingError,
    CalibrationError,
    NotFittedError,
    BenchmarkStageError,
)
from oodbench.version import __version__
from oodbench.ood_io import OodIO
from oodbench.samples import FeatureVector, LabeledSample, ProbVector
from oodbench.dataset import (
    DatasetSpec,
    OodPool,
    OodPoolSpec,
    PoolMode,
    Split,
    SplitDataset,
    generate_ood_pool,
    generate_synthetic,
)
from oodbench.csvio import CsvSchema, load_csv, save_csv
from oodbench.nn import SoftmaxClassifier, TrainConfig
from oodbench.iforest import IsolationForest
from oodbench.gbm import BoostedClassifier
from oodbench.detectors import Decision, Detector, DetectorKind, Verdict
from oodbench.metrics import MetricsRow, ScorePair
from oodbench.report import EvalReport
from oodbench.config import BenchmarkConfig, Method
from oodbench.benchmark import run_benchmark, run_sweep
from oodbench.serialization import ObjectKind, identify_object
from oodbench.utils import HREF

PersistedObject = Union[SoftmaxClassifier, IsolationForest, BoostedClassifier, Detector]


def read_text(text: str) -> PersistedObject:
    """Parses a persisted model, forest, boosted classifier or detector.

    The kind of object is identified from the header line.

    Raises:
        UnknownFormatError : If the text does not start with a readable oodbench
            header.
        ParseError : If the body does not match the format of its kind.
    """
    info = identify_object(text)
    if info.kind == ObjectKind.MODEL:
        return SoftmaxClassifier.from_text(text)
    if info.kind == ObjectKind.FOREST:
        return IsolationForest.from_text(text)
    if info.kind == ObjectKind.GBM:
        return BoostedClassifier.from_text(text)
    return Detector.from_text(text)


def read_file(href: HREF, ood_io: OodIO | None = None) -> PersistedObject:
    """Reads a persisted oodbench object from a file.

    This method returns a :class:`~oodbench.SoftmaxClassifier`, an
    :class:`~oodbench.IsolationForest`, a :class:`~oodbench.BoostedClassifier` or
    a :class:`~oodbench.Detector`, based on what the file contains.

    Args:
        href : The HREF to read the object from.
        ood_io : Optional :class:`~oodbench.OodIO` instance to use for I/O. If not
            provided, :meth:`OodIO.default` is used.
    """
    if ood_io is None:
        ood_io = OodIO.default()
    return read_text(ood_io.read_text(href))


def write_file(
    obj: PersistedObject, dest_href: HREF, ood_io: OodIO | None = None
) -> None:
    """Writes a model, forest, boosted classifier or detector to a file.

    Convenience method for the ``save_object`` method of each of them.
    """
    if ood_io is None:
        ood_io = OodIO.default()
    obj.save_object(str(os.fspath(dest_href)), ood_io)
