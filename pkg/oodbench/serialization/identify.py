from __future__ import annotations

from oodbench.errors import UnknownFormatError
from oodbench.utils import StringEnum
from oodbench.version import FormatVersion, get_format_version

HEADER_PREFIX = "oodbench-"


class ObjectKind(StringEnum):
    """Enumerates the kinds of objects oodbench persists as plain text."""

    MODEL = "model"
    FOREST = "forest"
    GBM = "gbm"
    DETECTOR = "detector"


class ObjectInfo:
    """Describes a persisted oodbench object as identified from its header line.

    Args:
        kind : The kind of object. One of :class:`ObjectKind`.
        version : The format version the object was written with.
    """

    kind: ObjectKind
    """The kind of object. One of :class:`ObjectKind`."""

    version: int
    """The format version the object was written with."""

    def __init__(self, kind: ObjectKind, version: int) -> None:
        self.kind = kind
        self.version = version

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObjectInfo):
            return NotImplemented
        return self.kind == other.kind and self.version == other.version

    def __repr__(self) -> str:
        return f"<ObjectInfo {self.kind} v{self.version}>"


def format_header(kind: ObjectKind) -> str:
    """Returns the header line, without newline, for an object of the given kind
    written with the current format version."""
    return f"{HEADER_PREFIX}{kind.value} {get_format_version()}"


def identify_object_kind(text: str) -> ObjectKind | None:
    """Determines the :class:`ObjectKind` of a persisted text from its first line.
    Returns ``None`` if the text does not start with an oodbench header.
    """
    first = text.lstrip().split("\n", 1)[0].strip()
    parts = first.split()
    if not parts or not parts[0].startswith(HEADER_PREFIX):
        return None
    try:
        return ObjectKind(parts[0][len(HEADER_PREFIX) :])
    except ValueError:
        return None


def identify_object(text: str) -> ObjectInfo:
    """Determines the kind and format version of a persisted text.

    Raises:
        UnknownFormatError : If the header is missing or malformed, names an unknown
            kind, or carries a format version this library cannot read.
    """
    kind = identify_object_kind(text)
    if kind is None:
        raise UnknownFormatError("Text does not start with an oodbench header", line=1)
    parts = text.lstrip().split("\n", 1)[0].split()
    if len(parts) != 2:
        raise UnknownFormatError(
            f"Malformed header '{' '.join(parts)}'; expected '<kind> <version>'",
            line=1,
        )
    try:
        version = int(parts[1])
    except ValueError:
        raise UnknownFormatError(f"Invalid format version '{parts[1]}'", line=1)
    if not FormatVersion.is_readable(version):
        raise UnknownFormatError(
            f"Unsupported {kind} format version {version}; this library reads "
            f"versions {FormatVersion.MIN_FORMAT_VERSION} to "
            f"{FormatVersion.DEFAULT_FORMAT_VERSION}",
            line=1,
        )
    return ObjectInfo(kind, version)


def split_body(text: str, expected: ObjectKind) -> list[str]:
    """Checks that ``text`` is a persisted object of the ``expected`` kind and
    returns its remaining non-empty lines, stripped.

    Raises:
        UnknownFormatError : If the header is not valid for ``expected``.
    """
    info = identify_object(text)
    if info.kind != expected:
        raise UnknownFormatError(
            f"Expected an oodbench {expected} but found a {info.kind}", line=1
        )
    lines = text.lstrip().split("\n")[1:]
    return [line.strip() for line in lines if line.strip()]
