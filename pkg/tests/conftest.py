import pytest

from oodbench import SplitDataset

from .utils import MemoryOodIO, TestCases


@pytest.fixture
def dataset() -> SplitDataset:
    return TestCases.dataset()


@pytest.fixture
def memory_io() -> MemoryOodIO:
    return MemoryOodIO()
