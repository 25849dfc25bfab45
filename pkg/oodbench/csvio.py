"""Reading and writing the CSV interchange formats.

Four schemas are recognized by their header row:

* probabilities: ``p0,p1,...,p{M-1}``, one :class:`~oodbench.ProbVector` per row;
* labeled features: ``f0,...,f{d-1},label``, one :class:`~oodbench.LabeledSample`
  per row;
* features: ``f0,...,f{d-1}``, one :class:`~oodbench.FeatureVector` per row;
* scores: ``score``, one detector score per row.

Numbers are written with :func:`~oodbench.utils.format_float`, so a save followed by
a load returns bit-identical values.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any, TypeAlias

import numpy as np

from oodbench.errors import InvalidProbVectorError, ParseError
from oodbench.ood_io import OodIO
from oodbench.samples import FeatureVector, LabeledSample, ProbVector
from oodbench.utils import HREF, StringEnum, format_float, parse_float

CsvItems: TypeAlias = (
    list[ProbVector] | list[LabeledSample] | list[FeatureVector] | list[float]
)


class CsvSchema(StringEnum):
    PROBABILITIES = "probabilities"
    LABELED_FEATURES = "labeled-features"
    FEATURES = "features"
    SCORES = "scores"


def _indexed(prefix: str, names: Sequence[str]) -> bool:
    expected = [f"{prefix}{i}" for i in range(len(names))]
    return len(names) > 0 and list(names) == expected


def detect_schema(header: Sequence[str]) -> CsvSchema:
    """Identifies the schema of a CSV file from its header row.

    Raises:
        ParseError : If the header matches no known schema.
    """
    names = [h.strip() for h in header]
    if names == ["score"]:
        return CsvSchema.SCORES
    if len(names) >= 2 and _indexed("p", names):
        return CsvSchema.PROBABILITIES
    if len(names) >= 2 and names[-1] == "label" and _indexed("f", names[:-1]):
        return CsvSchema.LABELED_FEATURES
    if _indexed("f", names):
        return CsvSchema.FEATURES
    raise ParseError(f"Unrecognized CSV header '{','.join(names)}'", line=1)


def schema_header(schema: CsvSchema, width: int) -> list[str]:
    """Builds the header row of a schema; ``width`` is ``M`` for probabilities and
    ``d`` for feature schemas."""
    if schema == CsvSchema.PROBABILITIES:
        return [f"p{i}" for i in range(width)]
    if schema == CsvSchema.LABELED_FEATURES:
        return [f"f{i}" for i in range(width)] + ["label"]
    if schema == CsvSchema.FEATURES:
        return [f"f{i}" for i in range(width)]
    return ["score"]


def load_csv(
    href: HREF,
    expected: CsvSchema | None = None,
    n_classes: int | None = None,
    ood_io: OodIO | None = None,
) -> CsvItems:
    """Loads a CSV file in any of the recognized schemas.

    Args:
        href : Location of the file.
        expected : If given, the schema the file must have.
        n_classes : If given, labels of a labeled-features file must be below it.
        ood_io : Optional :class:`~oodbench.OodIO` instance to read with.

    Returns:
        A list of :class:`ProbVector`, :class:`LabeledSample`,
        :class:`FeatureVector` or ``float``, according to the header.

    Raises:
        ParseError : For an unknown header, ragged rows, non-numeric values or
            rows that violate the invariants of their type. The error names the
            1-based line number.
    """
    io = ood_io or OodIO.default()
    rows = io.read_csv(href)
    where = str(href)
    if not rows:
        raise ParseError("File is empty; a header row is required", href=where)
    try:
        schema = detect_schema(rows[0])
    except ParseError as e:
        raise ParseError(e.message, line=e.line, href=where) from e
    if expected is not None and schema != expected:
        raise ParseError(
            f"Expected a {expected} file but the header describes {schema}",
            line=1,
            href=where,
        )
    width = len(rows[0])
    items: list[Any] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(
                f"Expected {width} values, found {len(row)}", line=lineno, href=where
            )
        try:
            items.append(_parse_row(schema, row, n_classes))
        except (ValueError, InvalidProbVectorError) as e:
            raise ParseError(str(e), line=lineno, href=where) from e
    return items


def _parse_row(schema: CsvSchema, row: list[str], n_classes: int | None) -> Any:
    if schema == CsvSchema.SCORES:
        return parse_float(row[0])
    if schema == CsvSchema.LABELED_FEATURES:
        label_text = row[-1].strip()
        if not label_text.isdigit():
            raise ValueError(f"Label '{label_text}' is not a non-negative integer")
        values = [parse_float(v) for v in row[:-1]]
        return LabeledSample(FeatureVector(values), int(label_text), n_classes)
    values = [parse_float(v) for v in row]
    if schema == CsvSchema.PROBABILITIES:
        probs = np.array(values)
        if abs(probs.sum() - 1.0) > 1e-6:
            raise InvalidProbVectorError(
                f"Probabilities sum to {format_float(probs.sum())}, not 1"
            )
        return ProbVector(probs)
    return FeatureVector(values)


def _schema_of(items: Sequence[Any]) -> CsvSchema:
    first = items[0]
    if isinstance(first, ProbVector):
        return CsvSchema.PROBABILITIES
    if isinstance(first, LabeledSample):
        return CsvSchema.LABELED_FEATURES
    if isinstance(first, FeatureVector):
        return CsvSchema.FEATURES
    return CsvSchema.SCORES


def save_csv(
    items: Sequence[Any],
    href: HREF,
    schema: CsvSchema | None = None,
    ood_io: OodIO | None = None,
) -> None:
    """Writes items to a CSV file, choosing the schema from the item type.

    Args:
        items : :class:`ProbVector`, :class:`LabeledSample`, :class:`FeatureVector`
            or float items, all of the same type and width.
        href : Destination of the file.
        schema : Schema to write. Required when ``items`` is empty.
        ood_io : Optional :class:`~oodbench.OodIO` instance to write with.
    """
    if schema is None:
        if len(items) == 0:
            raise ValueError("The schema of an empty item list must be given")
        schema = _schema_of(items)

    rows: list[list[str]] = []
    if schema == CsvSchema.SCORES:
        rows = [[format_float(v)] for v in items]
        width = 1
    elif schema == CsvSchema.PROBABILITIES:
        rows = [[format_float(v) for v in p.probs] for p in items]
        width = items[0].n_classes if items else 0
    elif schema == CsvSchema.LABELED_FEATURES:
        rows = [
            [format_float(v) for v in s.features.values] + [str(s.label)]
            for s in items
        ]
        width = items[0].features.dim if items else 0
    else:
        rows = [[format_float(v) for v in f.values] for f in items]
        width = items[0].dim if items else 0
    if any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("All items written to one CSV file must have the same width")
    (ood_io or OodIO.default()).write_csv(href, schema_header(schema, width), rows)
