from typing import Any


class OodBenchError(Exception):
    """An OodBenchError is raised for errors relating to out-of-distribution
    detection, e.g. for invalid inputs or trying to operate on a model that does not
    have the required state available.
    """

    pass


class ConfigurationError(OodBenchError):
    """A ConfigurationError is raised when a dataset, pool or training parameter
    is outside of its allowed range, when a configuration document contains unknown
    keys, or when configuration values contradict each other (for instance, an
    exposure pool that is also used for evaluation).
    """

    pass


class ConfigValidationError(ConfigurationError):
    """Represents a schema validation error for a configuration document.

    Args:
        source : Source of the exception. For the default jsonschema validation
            this is the list of ``jsonschema.ValidationError`` instances.
    """

    def __init__(self, message: str, source: Any | None = None):
        super().__init__(message)
        self.source = source


class DimensionMismatchError(OodBenchError, ValueError):
    """Raised when the dimension of an input does not match the dimension expected
    by a model or dataset, e.g. a feature vector of length 3 given to a classifier
    built for 2 input features.
    """

    def __init__(self, expected: int, actual: int, what: str = "input") -> None:
        super().__init__(f"Expected {what} of dimension {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class InvalidProbVectorError(OodBenchError, ValueError):
    """Raised when a sequence of numbers does not represent a probability vector:
    fewer than two entries, entries outside of [0, 1], or entries that do not sum
    to one.
    """

    pass


class ParseError(OodBenchError):
    """Raised when a CSV file or a persisted model cannot be parsed.

    Args:
        message : Description of the problem.
        line : Optional 1-based line number at which the problem was found.
        href : Optional location of the file being parsed.
    """

    def __init__(
        self, message: str, line: int | None = None, href: str | None = None
    ) -> None:
        prefix = ""
        if href is not None:
            prefix += f"{href}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)
        self.line = line
        self.message = message
        self.href = href


class UnknownFormatError(ParseError):
    """Raised when a persisted text does not start with a recognized
    ``oodbench-<kind> <version>`` header, or when the format version is newer than
    the versions this library can read.
    """

    pass


class FitError(OodBenchError):
    """Raised when a model cannot be fit to the given data, e.g. an isolation forest
    asked to fit fewer than two points or a boosted classifier given a single class.
    """

    pass


class TrainingError(OodBenchError):
    """Raised when training a classifier diverges.

    Args:
        epoch : The epoch in which the non-finite loss was observed.
    """

    def __init__(self, epoch: int, message: str | None = None) -> None:
        msg = message or f"Training diverged: non-finite loss in epoch {epoch}"
        super().__init__(msg)
        self.epoch = epoch


class CalibrationError(OodBenchError):
    """Raised when a detector threshold cannot be calibrated, typically because the
    validation set is too small for the requested quantile to be interior.
    """

    pass


class NotFittedError(OodBenchError):
    """Raised when a detector is used for scoring or decisions before it was fitted
    or calibrated."""

    pass


class BenchmarkStageError(OodBenchError):
    """Raised when a stage of the benchmark pipeline fails. The original exception
    is available as ``__cause__``.

    Args:
        stage : Name of the pipeline stage that failed.
        cause : The exception raised by the stage.
    """

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"Stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
