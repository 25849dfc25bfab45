"""Evaluation reports: per-method, per-pool metric rows with a macro-average
summary, written as an aligned text table and as CSV."""

from __future__ import annotations

from collections.abc import Sequence
from html import escape
from typing import Any

from oodbench.html.jinja_env import get_jinja_env
from oodbench.metrics import AVERAGE_POOL, MetricsRow, average_rows
from oodbench.ood_io import OodIO
from oodbench.utils import HREF, format_float, get_required
from oodbench.version import __version__

CSV_HEADER = [
    "method",
    "pool",
    "ood_error",
    "auroc",
    "fpr_at_95_tpr",
    "threshold",
    "classification_error",
]

_TEXT_COLUMNS = [
    ("method", 18),
    ("pool", 18),
    ("ood_error", 10),
    ("auroc", 8),
    ("fpr@95tpr", 10),
    ("threshold", 10),
    ("clf_error", 9),
]


class Provenance:
    """Where a report comes from.

    Args:
        config_hash : Hash of the benchmark configuration.
        seeds : Master seeds of the runs the report covers.
        version : Version of oodbench that produced the report.
    """

    def __init__(
        self, config_hash: str, seeds: Sequence[int], version: str = __version__
    ) -> None:
        self.config_hash = config_hash
        self.seeds = [int(s) for s in seeds]
        self.version = version

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Provenance):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"<Provenance {self.to_dict()}>"

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "version": self.version,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> Provenance:
        return Provenance(
            get_required(d, "provenance", "config_hash"),
            get_required(d, "provenance", "seeds"),
            d.get("version", __version__),
        )


class EvalReport:
    """Metric rows for every evaluated method on every OOD pool.

    Args:
        rows : One row per (method, pool) pair. Average rows are not part of
            ``rows``; they are derived into :attr:`summary`.
        provenance : The report's :class:`Provenance`.

    Raises:
        ValueError : If a (method, pool) pair is repeated or missing.
    """

    rows: list[MetricsRow]
    summary: list[MetricsRow]
    """Macro average over pools of each method, in method order."""

    def __init__(self, rows: Sequence[MetricsRow], provenance: Provenance) -> None:
        seen: set[tuple[str, str]] = set()
        for row in rows:
            if row.pool == AVERAGE_POOL:
                raise ValueError("Average rows are derived, not passed in")
            key = (row.method, row.pool)
            if key in seen:
                raise ValueError(f"Duplicate report row for {key}")
            seen.add(key)
        self.rows = list(rows)
        self.provenance = provenance
        missing = [
            (m, p) for m in self.methods for p in self.pools if (m, p) not in seen
        ]
        if missing:
            raise ValueError(f"Missing report rows for {missing}")
        self.summary = [
            average_rows([r for r in self.rows if r.method == m]) for m in self.methods
        ]

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    @property
    def pools(self) -> list[str]:
        return list(dict.fromkeys(r.pool for r in self.rows))

    def row(self, method: str, pool: str) -> MetricsRow:
        """The row of a method on a pool; ``pool="average"`` selects the summary."""
        candidates = self.summary if pool == AVERAGE_POOL else self.rows
        for r in candidates:
            if r.method == method and r.pool == pool:
                return r
        raise KeyError(f"No report row for ({method!r}, {pool!r})")

    def all_rows(self) -> list[MetricsRow]:
        """Rows followed by the summary rows."""
        return self.rows + self.summary

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EvalReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return (
            f"<EvalReport methods={len(self.methods)} pools={len(self.pools)} "
            f"seeds={self.provenance.seeds}>"
        )

    def _repr_html_(self) -> str:
        jinja_env = get_jinja_env()
        if jinja_env:
            template = jinja_env.get_template("Report.jinja2")
            return str(template.render(report=self))
        else:
            return escape(repr(self))

    def to_dict(self) -> dict[str, Any]:
        return {
            "provenance": self.provenance.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> EvalReport:
        return EvalReport(
            [MetricsRow.from_dict(r) for r in get_required(d, "report", "rows")],
            Provenance.from_dict(get_required(d, "report", "provenance")),
        )

    def to_text(self) -> str:
        """Aligned plain-text table with four decimals; missing values print as
        ``-``. A provenance header precedes the table and the summary block follows
        it."""
        p = self.provenance
        seeds = ",".join(str(s) for s in p.seeds)
        lines = [
            f"# oodbench {p.version}",
            f"# config {p.config_hash}",
            f"# seeds {seeds}",
            "",
            _text_line([name for name, _ in _TEXT_COLUMNS]),
        ]
        lines += [_text_line(_text_cells(r)) for r in self.rows]
        lines.append("")
        lines += [_text_line(_text_cells(r)) for r in self.summary]
        return "\n".join(lines) + "\n"

    def csv_rows(self) -> list[list[str]]:
        """CSV cells of every row and summary row, full precision."""
        return [_csv_cells(r) for r in self.all_rows()]

    def save_text(self, dest_href: HREF, ood_io: OodIO | None = None) -> None:
        (ood_io or OodIO.default()).write_text(dest_href, self.to_text())

    def save_csv(self, dest_href: HREF, ood_io: OodIO | None = None) -> None:
        (ood_io or OodIO.default()).write_csv(dest_href, CSV_HEADER, self.csv_rows())


def _opt(value: float | None, fmt: str) -> str:
    return "-" if value is None else format(value, fmt)


def _text_cells(row: MetricsRow) -> list[str]:
    return [
        row.method,
        row.pool,
        f"{row.ood_error:.4f}",
        f"{row.auroc:.4f}",
        f"{row.fpr_at_95_tpr:.4f}",
        _opt(row.threshold, ".4f"),
        _opt(row.classification_error, ".4f"),
    ]


def _text_line(cells: list[str]) -> str:
    return " ".join(
        cell.ljust(width) for cell, (_, width) in zip(cells, _TEXT_COLUMNS)
    ).rstrip()


def _csv_cells(row: MetricsRow) -> list[str]:
    return [
        row.method,
        row.pool,
        format_float(row.ood_error),
        format_float(row.auroc),
        format_float(row.fpr_at_95_tpr),
        "" if row.threshold is None else format_float(row.threshold),
        (
            ""
            if row.classification_error is None
            else format_float(row.classification_error)
        ),
    ]


def merge_reports(
    reports: Sequence[EvalReport], config_hash: str | None = None
) -> EvalReport:
    """Averages several reports row by row, the summary of a seed sweep.

    Args:
        reports : Reports with the same methods and pools, typically one per seed.
        config_hash : Hash recorded in the merged provenance; that of the first
            report by default.

    Raises:
        ValueError : If the reports differ in methods or pools.
    """
    if not reports:
        raise ValueError("Cannot merge zero reports")
    first = reports[0]
    for other in reports[1:]:
        if other.methods != first.methods or other.pools != first.pools:
            raise ValueError("Cannot merge reports with different rows")
    rows = [
        average_rows([rep.row(r.method, r.pool) for rep in reports], pool=r.pool)
        for r in first.rows
    ]
    seeds = [s for rep in reports for s in rep.provenance.seeds]
    return EvalReport(
        rows, Provenance(config_hash or first.provenance.config_hash, seeds)
    )
