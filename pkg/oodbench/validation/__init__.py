"""JSON schema validation of benchmark configuration documents.

Validation needs the optional ``jsonschema`` package (``pip install
oodbench[validation]``). Without it, configuration documents are still checked
by :meth:`BenchmarkConfig.from_dict <oodbench.config.BenchmarkConfig.from_dict>`,
which rejects unknown keys and invalid values.
"""

from __future__ import annotations

import importlib.resources
import json
import logging
from functools import lru_cache
from typing import Any, cast

from oodbench.errors import ConfigValidationError

try:
    import jsonschema
    import jsonschema.exceptions
    import jsonschema.validators

    HAS_JSONSCHEMA = True
except ImportError:
    HAS_JSONSCHEMA = False

logger = logging.getLogger(__name__)

CONFIG_SCHEMA = "benchmark-config.json"

__all__ = ["HAS_JSONSCHEMA", "get_config_schema", "validate_config"]


@lru_cache
def get_config_schema() -> dict[str, Any]:
    """The bundled JSON schema of benchmark configuration documents."""
    with (
        importlib.resources.files("oodbench.validation.jsonschemas")
        .joinpath(CONFIG_SCHEMA)
        .open("r") as f
    ):
        return cast(dict[str, Any], json.load(f))


def validate_config(config_dict: dict[str, Any], href: str | None = None) -> None:
    """Validates a benchmark configuration document against the bundled schema.

    Args:
        config_dict : The parsed JSON document.
        href : Optional location of the document, used in the error message.

    Raises:
        ImportError : If ``jsonschema`` is not installed.
        ConfigValidationError : If the document does not match the schema. The
            exception is raised from the "best" error as determined by the
            jsonschema library; all errors are available as
            ``ConfigValidationError.source``.
    """
    if not HAS_JSONSCHEMA:
        raise ImportError("Cannot validate, requires jsonschema package")

    schema = get_config_schema()
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    errors = list(cls(schema).iter_errors(config_dict))
    if errors:
        msg = "Validation failed for benchmark configuration"
        if href is not None:
            msg += f" at {href}"
        best = jsonschema.exceptions.best_match(errors)
        if best:
            msg += "\n" + str(best)
        logger.debug(f"{len(errors)} schema error(s) in benchmark configuration")
        raise ConfigValidationError(msg, source=errors) from best
