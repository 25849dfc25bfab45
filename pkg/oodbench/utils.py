from __future__ import annotations

import math
import os
from collections.abc import Mapping
from datetime import datetime, timezone
from enum import Enum
from typing import Any, TypeAlias, cast

import dateutil.parser

from oodbench.errors import ConfigurationError

#: HREF string or path-like object.
HREF: TypeAlias = str | os.PathLike[str]


class StringEnum(str, Enum):
    """Base :class:`enum.Enum` class for string enums that will serialize as the string
    value."""

    def __repr__(self) -> str:
        return repr(self.value)

    def __str__(self) -> str:
        return cast(str, self.value)


def format_float(value: float) -> str:
    """Formats a float using the shortest decimal representation that reads back to
    the identical double (at most 17 significant digits).

    This is the representation used in every CSV file and persisted model written by
    oodbench, so that ``parse_float(format_float(x)) == x`` holds bitwise.
    """
    return repr(float(value))


def parse_float(text: str) -> float:
    """Parses a decimal number written by :func:`format_float`, raising
    :exc:`ValueError` on anything that is not a finite real."""
    value = float(text.strip())
    if not math.isfinite(value):
        raise ValueError(f"Non-finite value '{text.strip()}'")
    return value


def datetime_to_str(dt: datetime, timespec: str = "auto") -> str:
    """Converts a :class:`datetime.datetime` instance to an ISO8601 string in the
    `RFC 3339, section 5.6
    <https://datatracker.ietf.org/doc/html/rfc3339#section-5.6>`__ format used by run
    manifests.

    Args:
        dt : The datetime to convert.
        timespec: An optional argument that specifies the number of additional
            terms of the time to include. Valid options are 'auto', 'hours',
            'minutes', 'seconds', 'milliseconds' and 'microseconds'. The default value
            is 'auto'.

    Returns:
        str: The ISO8601 (RFC 3339) formatted string representing the datetime.
    """
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)

    timestamp = dt.isoformat(timespec=timespec)
    zulu = "+00:00"
    if timestamp.endswith(zulu):
        timestamp = f"{timestamp[: -len(zulu)]}Z"

    return timestamp


def str_to_datetime(s: str) -> datetime:
    """Converts a string timestamp to a :class:`datetime.datetime` instance using
    :meth:`dateutil.parser.isoparse` under the hood.

    Args:
        s (str) : The string to convert to :class:`datetime.datetime`.

    Returns:
        str: The :class:`datetime.datetime` represented the by the string.
    """
    return dateutil.parser.isoparse(s)


def now_in_utc() -> datetime:
    """Returns a datetime value of now with the UTC timezone applied"""
    return datetime.now(timezone.utc)


def now_to_rfc3339_str() -> str:
    """Returns an RFC 3339 string representing now"""
    return datetime_to_str(now_in_utc())


def get_required(d: Mapping[str, Any], obj: str, prop: str) -> Any:
    """Retrieves a required key from a configuration dictionary, raising a
    :exc:`~oodbench.errors.ConfigurationError` naming the object and property if it
    is missing.

    Args:
        d : The dictionary to read from.
        obj : A name for the object being deserialized, used in the error message.
        prop : The name of the required property.
    """
    if prop not in d or d[prop] is None:
        raise ConfigurationError(f"{obj} is missing required property '{prop}'")
    return d[prop]


def check_keys(
    d: Mapping[str, Any], allowed: set[str] | frozenset[str], obj: str
) -> None:
    """Raises a :exc:`~oodbench.errors.ConfigurationError` if ``d`` holds any key not
    in ``allowed``."""
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigurationError(
            f"Unknown key(s) for {obj}: {', '.join(repr(k) for k in unknown)}"
        )
