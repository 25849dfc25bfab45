from __future__ import annotations

from typing import TYPE_CHECKING, Any
from unittest.mock import Mock

import oodbench
from oodbench.ood_io import DefaultOodIO, OodIO

if TYPE_CHECKING:
    from oodbench.utils import HREF


class MockOodIO(oodbench.OodIO):
    """Creates a mock that records OodIO calls for testing and allows
    clients to replace OodIO functionality, all within a context scope.

    Args:
        wrapped_ood_io: The OodIO that will be used to perform the calls.
            Defaults to an instance of DefaultOodIO.
    """

    mock: Mock
    wrapped_ood_io: OodIO

    def __init__(self, wrapped_ood_io: OodIO | None = None) -> None:
        self.mock = Mock()
        if wrapped_ood_io is None:
            self.wrapped_ood_io = DefaultOodIO()
        else:
            self.wrapped_ood_io = wrapped_ood_io

    def read_text(self, source: HREF, *args: Any, **kwargs: Any) -> str:
        self.mock.read_text(source)
        return self.wrapped_ood_io.read_text(source)

    def write_text(
        self,
        dest: HREF,
        txt: str,
        *args: Any,
        **kwargs: Any,
    ) -> None:
        self.mock.write_text(dest, txt)
        self.wrapped_ood_io.write_text(dest, txt)


class MemoryOodIO(oodbench.OodIO):
    """Keeps every written text in a dict instead of on disk."""

    def __init__(self) -> None:
        self.files: dict[str, str] = {}

    def read_text(self, source: HREF, *args: Any, **kwargs: Any) -> str:
        try:
            return self.files[str(source)]
        except KeyError:
            raise FileNotFoundError(str(source))

    def write_text(self, dest: HREF, txt: str, *args: Any, **kwargs: Any) -> None:
        self.files[str(dest)] = txt


class MockDefaultOodIO:
    """Context manager for mocking OodIO."""

    def __enter__(self) -> MockOodIO:
        mock = MockOodIO()
        oodbench.OodIO.set_default(lambda: mock)
        return mock

    def __exit__(self, *args: Any) -> None:
        oodbench.OodIO.set_default(DefaultOodIO)
