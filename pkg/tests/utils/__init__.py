__all__ = [
    "TestCases",
    "MockOodIO",
    "MemoryOodIO",
    "assert_to_from_dict",
    "finite_difference",
]
from collections.abc import Callable
from copy import deepcopy
from typing import Any

import numpy as np

from tests.utils.ood_io_mock import MemoryOodIO, MockOodIO
from tests.utils.test_cases import TestCases


def assert_to_from_dict(cls: Any, d: dict[str, Any]) -> None:
    d1 = deepcopy(d)
    d2 = cls.from_dict(d).to_dict()
    assert d1 == d2


def finite_difference(
    fn: Callable[[np.ndarray], float], at: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite-difference gradient of ``fn`` at ``at``; ``at`` is restored
    after every evaluation."""
    grad = np.zeros_like(at)
    flat = at.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = fn(at)
        flat[i] = original - step
        minus = fn(at)
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * step)
    return grad
