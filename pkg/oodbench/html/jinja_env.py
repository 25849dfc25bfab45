from __future__ import annotations

from functools import lru_cache
from typing import Any


@lru_cache
def get_jinja_env() -> Any:
    """The template environment for notebook rendering, or ``None`` when jinja2 is
    not installed."""
    try:
        from jinja2 import Environment, PackageLoader, select_autoescape
    except ModuleNotFoundError:
        return None

    environment = Environment(
        loader=PackageLoader("oodbench", "html"), autoescape=select_autoescape()
    )

    return environment
