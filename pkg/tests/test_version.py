import pytest

import oodbench
from oodbench.version import FormatVersion, get_format_version
from tests.utils import TestCases


def test_library_version_is_exported() -> None:
    assert oodbench.__version__ == oodbench.version.__version__
    assert all(part.isdigit() for part in oodbench.__version__.split("."))


def test_format_version_written_is_latest() -> None:
    assert get_format_version() == FormatVersion.DEFAULT_FORMAT_VERSION


@pytest.mark.parametrize(
    "version,readable",
    [
        (FormatVersion.MIN_FORMAT_VERSION - 1, False),
        (FormatVersion.MIN_FORMAT_VERSION, True),
        (FormatVersion.DEFAULT_FORMAT_VERSION, True),
        (FormatVersion.DEFAULT_FORMAT_VERSION + 1, False),
    ],
)
def test_is_readable(version: int, readable: bool) -> None:
    assert FormatVersion.is_readable(version) is readable


def test_written_header_carries_format_version() -> None:
    text = TestCases.random_model().to_text()
    assert text.splitlines()[0].split()[1] == str(get_format_version())
