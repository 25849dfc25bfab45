from __future__ import annotations

import csv
import io
import json
import logging
import os
from abc import ABC, abstractmethod
from collections.abc import Callable, Iterable, Sequence
from typing import Any

from oodbench.utils import HREF

# Use orjson if available
try:
    import orjson
except ImportError:
    orjson = None  # type: ignore[assignment]


logger = logging.getLogger(__name__)


class OodIO(ABC):
    """Abstract base for the I/O layer every oodbench reader and writer goes
    through. Subclass it and pass an instance (or register it with
    :meth:`OodIO.set_default`) to read from or write to something other than the
    local file system."""

    _default_io: Callable[[], OodIO] | None = None

    @abstractmethod
    def read_text(self, source: HREF, *args: Any, **kwargs: Any) -> str:
        """Read text from the given location.

        Args:
            source : The source to read from.
            *args : Arbitrary positional arguments that may be utilized by the concrete
                implementation.
            **kwargs : Arbitrary keyword arguments that may be utilized by the concrete
                implementation.

        Returns:
            str: The text contained in the file at the given location.
        """
        raise NotImplementedError

    @abstractmethod
    def write_text(
        self,
        dest: HREF,
        txt: str,
        *args: Any,
        **kwargs: Any,
    ) -> None:
        """Write the given text to a file at the given location.

        Args:
            dest : The destination to write to.
            txt : The text to write.
        """
        raise NotImplementedError

    def json_loads(self, txt: str, *args: Any, **kwargs: Any) -> dict[str, Any]:
        """Deserializes a dictionary from a JSON string, using orjson when it is
        installed.

        Args:

            txt : The JSON string to deserialize to a dictionary.
        """
        result: dict[str, Any]
        if orjson is not None:
            result = orjson.loads(txt)
        else:
            result = json.loads(txt, *args, **kwargs)
        return result

    def json_dumps(self, json_dict: dict[str, Any], *args: Any, **kwargs: Any) -> str:
        """Serializes a dictionary to an indented JSON string, using orjson when it
        is installed.

        Args:

            json_dict : The dictionary to serialize
        """
        if orjson is not None:
            return orjson.dumps(json_dict, option=orjson.OPT_INDENT_2, **kwargs).decode(
                "utf-8"
            )
        else:
            return json.dumps(json_dict, *args, indent=2, **kwargs)

    def read_json(self, source: HREF, *args: Any, **kwargs: Any) -> dict[str, Any]:
        """Read a dict from the given source.

        Args:
            source : The source from which to read.

        Returns:
            dict: A dict representation of the JSON contained in the file at the
            given source.
        """
        txt = self.read_text(source, *args, **kwargs)
        return self.json_loads(txt)

    def save_json(
        self,
        dest: HREF,
        json_dict: dict[str, Any],
        *args: Any,
        **kwargs: Any,
    ) -> None:
        """Write a dict to the given location as JSON.

        Args:
            dest : The destination file to write the text to.
            json_dict : The JSON dict to write.
        """
        txt = self.json_dumps(json_dict, *args, **kwargs)
        self.write_text(dest, txt)

    def read_csv(self, source: HREF) -> list[list[str]]:
        """Reads a comma-separated file into a list of rows, the header row
        included. Blank lines are dropped."""
        txt = self.read_text(source)
        return [row for row in csv.reader(io.StringIO(txt)) if row]

    def write_csv(
        self, dest: HREF, header: Sequence[str], rows: Iterable[Sequence[str]]
    ) -> None:
        """Writes a header and rows as comma-separated, newline-terminated text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        self.write_text(dest, buf.getvalue())

    @classmethod
    def set_default(cls, ood_io_class: Callable[[], OodIO]) -> None:
        """Set the default OodIO instance to use."""
        cls._default_io = ood_io_class

    @classmethod
    def default(cls) -> OodIO:
        if cls._default_io is None:
            cls._default_io = DefaultOodIO

        return cls._default_io()


class DefaultOodIO(OodIO):
    def read_text(self, source: HREF, *_: Any, **__: Any) -> str:
        """A concrete implementation of :meth:`OodIO.read_text
        <oodbench.OodIO.read_text>` reading a local UTF-8 file."""
        href = str(os.fspath(source))
        logger.debug(f"Reading {href}")
        with open(href, encoding="utf-8") as f:
            return f.read()

    def write_text(self, dest: HREF, txt: str, *_: Any, **__: Any) -> None:
        """A concrete implementation of :meth:`OodIO.write_text
        <oodbench.OodIO.write_text>` writing a local UTF-8 file. Missing parent
        directories are created."""
        href = str(os.fspath(dest))
        dirname = os.path.dirname(href)
        if dirname != "" and not os.path.isdir(dirname):
            os.makedirs(dirname)
        logger.debug(f"Writing {href}")
        with open(href, "w", encoding="utf-8", newline="") as f:
            f.write(txt)
