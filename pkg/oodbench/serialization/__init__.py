__all__ = [
    "ObjectInfo",
    "ObjectKind",
    "format_header",
    "identify_object",
    "identify_object_kind",
    "split_body",
]
from oodbench.serialization.identify import (
    ObjectInfo,
    ObjectKind,
    format_header,
    identify_object,
    identify_object_kind,
    split_body,
)
