__version__ = "0.3.0"
"""Library version"""


class FormatVersion:
    DEFAULT_FORMAT_VERSION = 1
    """Latest version of the plain-text model formats written by oodbench"""

    MIN_FORMAT_VERSION = 1
    """Oldest version of the plain-text model formats oodbench can still read"""

    @classmethod
    def is_readable(cls, version: int) -> bool:
        return cls.MIN_FORMAT_VERSION <= version <= cls.DEFAULT_FORMAT_VERSION


def get_format_version() -> int:
    """Returns the format version oodbench writes in the header line of every
    persisted model, forest, boosted classifier and detector.

    Returns:
        int: The format version.
    """
    return FormatVersion.DEFAULT_FORMAT_VERSION
