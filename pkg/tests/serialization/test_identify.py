import pytest

from oodbench.errors import UnknownFormatError
from oodbench.serialization import (
    ObjectInfo,
    ObjectKind,
    format_header,
    identify_object,
    identify_object_kind,
    split_body,
)
from oodbench.version import FormatVersion, get_format_version
from tests.utils import TestCases


class TestIdentify:
    @pytest.mark.parametrize("kind", list(ObjectKind))
    def test_header_identifies_kind(self, kind: ObjectKind) -> None:
        text = format_header(kind) + "\nbody\n"
        assert identify_object_kind(text) == kind
        assert identify_object(text) == ObjectInfo(kind, get_format_version())

    def test_leading_whitespace_is_ignored(self) -> None:
        assert identify_object_kind("\n  oodbench-forest 1\n") == ObjectKind.FOREST

    @pytest.mark.parametrize(
        "text",
        ["", "layers 2 2 2\n", "oodbench-network 1\n", "stac_version 1.0.0\n"],
    )
    def test_unknown_kind(self, text: str) -> None:
        assert identify_object_kind(text) is None
        with pytest.raises(UnknownFormatError) as excinfo:
            identify_object(text)
        assert excinfo.value.line == 1

    @pytest.mark.parametrize(
        "text",
        ["oodbench-model\n", "oodbench-model 1 2\n", "oodbench-model one\n"],
    )
    def test_malformed_header(self, text: str) -> None:
        with pytest.raises(UnknownFormatError):
            identify_object(text)

    def test_newer_version_is_rejected(self) -> None:
        with open(TestCases.get_path("data-files/models/future-version.txt")) as f:
            text = f.read()
        with pytest.raises(UnknownFormatError, match="version 99"):
            identify_object(text)

    def test_readable_versions(self) -> None:
        assert FormatVersion.is_readable(FormatVersion.DEFAULT_FORMAT_VERSION)
        assert not FormatVersion.is_readable(0)


class TestSplitBody:
    def test_returns_stripped_non_empty_lines(self) -> None:
        text = "oodbench-gbm 1\n  a 1 \n\nb 2\n"
        assert split_body(text, ObjectKind.GBM) == ["a 1", "b 2"]

    def test_kind_mismatch(self) -> None:
        with pytest.raises(UnknownFormatError, match="Expected an oodbench model"):
            split_body("oodbench-gbm 1\n", ObjectKind.MODEL)
