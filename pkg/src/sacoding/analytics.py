"""Frequency tables, comparisons, flow statistics, agreement, and reports.

All functions here are pure over immutable session snapshots. Counting uses
exact integers; proportions keep full float precision internally and are
rounded half-up to one decimal only for display, matching how the published
result tables print percentages.
"""

from __future__ import annotations

import io
import json
import csv as csv_module
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from typing import Mapping, Optional, Sequence, Union

from .corpus import Dataset
from .session import Session

# Report-side code order. T and Tprime are distinct leaf identities in the
# tree but are merged into the single displayed column "T".
DISPLAY_CODES = ("P1", "P2", "P3", "P4", "P5", "P6", "T", "N1", "N1.1", "M1", "M2")
ACTIONABLE_DISPLAY_CODES = ("P3", "P4", "P5", "P6")
ACTIONABLE_ROW = "Actionable"

FORMAT_ALIASES = {
    "table": "table",
    "table-text": "table",
    "csv": "csv",
    "delimited": "csv",
    "json": "json",
    "structured": "json",
    "chart": "chart",
    "chart-data": "chart",
}


class AnalyticsError(Exception):
    pass


class DatasetMismatchError(AnalyticsError):
    pass


class LeafSetMismatchError(AnalyticsError):
    pass


class ModeUnavailableError(AnalyticsError):
    pass


class NoOverlapError(AnalyticsError):
    pass


class ReportFormatError(AnalyticsError):
    pass


def display_code(leaf_id: str) -> str:
    """Collapse the two Desired Outcome leaves into the one displayed code."""
    return "T" if leaf_id in ("T", "Tprime") else leaf_id


def percent_string(numerator: int, denominator: int) -> str:
    """Exact half-up percentage with one decimal, e.g. 11/28 -> '39.3%'."""
    value = (Decimal(numerator) * 100 / Decimal(denominator)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    return f"{value}%"


def fraction_percent_string(fraction: float) -> str:
    """Half-up one-decimal rendering of an already-computed fraction."""
    value = Decimal(str(fraction * 100)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return f"{value}%"


# -- frequency tables ---------------------------------------------------------

@dataclass(frozen=True)
class FrequencyReport:
    """Per-category and total code counts for one session (Tprime merged)."""

    dataset_id: str
    title: str
    categories: tuple[tuple[str, int], ...]  # (category_id, items in category)
    per_category: Mapping[str, Mapping[str, int]]
    totals: Mapping[str, int]
    proportions: Mapping[str, float]  # exact fractions over coded_count
    coded_count: int
    item_count: int
    actionable_count: int
    actionable_fraction: Optional[float]  # None when nothing is coded

    def displayed_codes(self) -> tuple[str, ...]:
        """Codes that appear in the results, in canonical display order."""
        return tuple(code for code in DISPLAY_CODES if self.totals.get(code, 0) > 0)

    def to_document(self) -> dict:
        return {
            "kind": "frequency-report",
            "dataset_id": self.dataset_id,
            "title": self.title,
            "categories": [{"id": cid, "n": n} for cid, n in self.categories],
            "per_category": {cid: dict(counts) for cid, counts in self.per_category.items()},
            "totals": dict(self.totals),
            "proportions": dict(self.proportions),
            "proportions_display": {
                code: percent_string(count, self.coded_count)
                for code, count in self.totals.items()
            }
            if self.coded_count
            else {},
            "coded_count": self.coded_count,
            "item_count": self.item_count,
            "actionable_count": self.actionable_count,
            "actionable_fraction": self.actionable_fraction,
            "actionable_display": percent_string(self.actionable_count, self.coded_count)
            if self.coded_count
            else None,
        }


def frequency_table(session: Session, dataset: Optional[Dataset] = None) -> FrequencyReport:
    """Count assigned codes by category and overall for one session."""
    dataset = dataset if dataset is not None else session.dataset
    if dataset.dataset_id != session.dataset_id:
        raise DatasetMismatchError(
            f"session is for dataset {session.dataset_id!r}, got {dataset.dataset_id!r}"
        )
    category_of = {item.item_id: item.category_id for item in dataset.items}

    raw_per_category: dict[str, dict[str, int]] = {c.id: {} for c in dataset.categories}
    raw_totals: dict[str, int] = {}
    for decision in session.decisions.values():
        code = display_code(decision.code.id)
        category_id = category_of[decision.item_id]
        raw_per_category[category_id][code] = raw_per_category[category_id].get(code, 0) + 1
        raw_totals[code] = raw_totals.get(code, 0) + 1

    def ordered(counts: Mapping[str, int]) -> dict[str, int]:
        return {code: counts[code] for code in DISPLAY_CODES if code in counts}

    coded_count = sum(raw_totals.values())
    totals = ordered(raw_totals)
    proportions = (
        {code: count / coded_count for code, count in totals.items()} if coded_count else {}
    )
    actionable_count = sum(raw_totals.get(code, 0) for code in ACTIONABLE_DISPLAY_CODES)
    sizes = dataset.category_sizes()
    return FrequencyReport(
        dataset_id=dataset.dataset_id,
        title=dataset.title,
        categories=tuple((c.id, sizes[c.id]) for c in dataset.categories),
        per_category={cid: ordered(counts) for cid, counts in raw_per_category.items()},
        totals=totals,
        proportions=proportions,
        coded_count=coded_count,
        item_count=len(dataset),
        actionable_count=actionable_count,
        actionable_fraction=(actionable_count / coded_count) if coded_count else None,
    )


# -- actionability ------------------------------------------------------------

@dataclass(frozen=True)
class ActionabilityResult:
    actionable_count: int
    coded_count: int
    fraction: Optional[float]  # None (undefined) for an empty session

    @property
    def defined(self) -> bool:
        return self.fraction is not None

    def display(self) -> str:
        if self.fraction is None:
            return "undefined (no coded items)"
        return (
            f"{self.actionable_count}/{self.coded_count} "
            f"({percent_string(self.actionable_count, self.coded_count)})"
        )


def actionability(session: Session) -> ActionabilityResult:
    """Share of coded items carrying an actionable code."""
    actionable_count = 0
    for decision in session.decisions.values():
        if decision.code.actionable:
            actionable_count += 1
    coded_count = len(session.decisions)
    return ActionabilityResult(
        actionable_count=actionable_count,
        coded_count=coded_count,
        fraction=(actionable_count / coded_count) if coded_count else None,
    )


# -- dataset comparison ---------------------------------------------------------

@dataclass(frozen=True)
class MatrixColumn:
    label: str
    counts: Mapping[str, int]  # per display code; Actionable included
    coded_count: int
    values: Mapping[str, float]  # fractions; zero-count codes present as 0.0


@dataclass(frozen=True)
class ComparisonMatrix:
    """Code proportions side by side, one column per session."""

    rows: tuple[str, ...]
    columns: tuple[MatrixColumn, ...]

    def to_document(self) -> dict:
        return {
            "kind": "comparison-matrix",
            "rows": list(self.rows),
            "columns": [
                {
                    "label": column.label,
                    "coded_count": column.coded_count,
                    "counts": dict(column.counts),
                    "values": dict(column.values),
                    "display": {
                        row: percent_string(column.counts[row], column.coded_count)
                        if column.coded_count
                        else None
                        for row in self.rows
                    },
                }
                for column in self.columns
            ],
        }


def _leaf_set(session: Session) -> frozenset[tuple[str, bool]]:
    return frozenset((leaf.id, leaf.actionable) for leaf in session.tree.leaves.values())


def compare(sessions: Sequence[Session], labels: Optional[Sequence[str]] = None) -> ComparisonMatrix:
    """One column of code proportions per session, plus an Actionable row."""
    if not sessions:
        raise AnalyticsError("compare() needs at least one session")
    reference = _leaf_set(sessions[0])
    for other in sessions[1:]:
        if _leaf_set(other) != reference:
            raise LeafSetMismatchError("sessions were coded against different code taxonomies")
    if labels is not None and len(labels) != len(sessions):
        raise AnalyticsError("labels must match sessions one to one")

    rows = DISPLAY_CODES + (ACTIONABLE_ROW,)
    columns = []
    for index, session in enumerate(sessions):
        report = frequency_table(session)
        counts = {code: report.totals.get(code, 0) for code in DISPLAY_CODES}
        counts[ACTIONABLE_ROW] = report.actionable_count
        coded = report.coded_count
        values = {row: (counts[row] / coded if coded else 0.0) for row in rows}
        label = labels[index] if labels is not None else (session.dataset.title or session.dataset_id)
        columns.append(MatrixColumn(label=label, counts=counts, coded_count=coded, values=values))
    return ComparisonMatrix(rows=rows, columns=tuple(columns))


# -- question flow statistics ---------------------------------------------------

FLOW_MODE_ALIASES = {
    "recorded-paths": "recorded-paths",
    "recorded": "recorded-paths",
    "inferred-from-codes": "inferred-from-codes",
    "inferred": "inferred-from-codes",
}

# Flow tallies that the original analysis of a bundled dataset reported with a
# value that differs from code-implied inference. The computed value is never
# adjusted; a note surfaces the divergence instead.
REPORTED_FLOW_TALLIES: dict[tuple[str, str, str], int] = {
    ("dcms-subtopics", "Q4", "yes"): 17,
}


@dataclass(frozen=True)
class QuestionTally:
    yes: int
    no: int
    reached: int


@dataclass(frozen=True)
class FlowStats:
    """Per-question yes/no/reached tallies for one session."""

    mode: str
    dataset_id: str
    coded_count: int
    item_count: int
    per_question: Mapping[str, QuestionTally]
    unknown_questions: tuple[str, ...]
    notes: tuple[str, ...] = ()

    def yes_fraction(self, question_id: str) -> float:
        """Yes-count over all coded items (the published denominators)."""
        return self.per_question[question_id].yes / self.coded_count

    def to_document(self) -> dict:
        return {
            "kind": "flow-stats",
            "mode": self.mode,
            "dataset_id": self.dataset_id,
            "coded_count": self.coded_count,
            "item_count": self.item_count,
            "questions": [
                {
                    "id": qid,
                    "reached": tally.reached,
                    "yes": tally.yes,
                    "no": tally.no,
                    "yes_pct_of_coded": percent_string(tally.yes, self.coded_count)
                    if self.coded_count
                    else None,
                }
                for qid, tally in self.per_question.items()
            ],
            "unknown_questions": list(self.unknown_questions),
            "notes": list(self.notes),
        }


def question_flow_stats(session: Session, mode: str) -> FlowStats:
    """Tally how items flowed through the questions.

    recorded-paths uses the answer paths the coder actually took (pathless
    decisions make this mode unavailable). inferred-from-codes derives each
    item's path from its final code, which requires every assigned code to
    occupy exactly one position in the tree; questions not on any implied
    path are reported as unknown rather than zero.
    """
    try:
        mode = FLOW_MODE_ALIASES[mode]
    except KeyError:
        raise ModeUnavailableError(
            f"unknown mode {mode!r}; expected 'recorded-paths' or 'inferred-from-codes'"
        ) from None

    yes: dict[str, int] = {}
    no: dict[str, int] = {}
    reached: dict[str, int] = {}

    def tally_step(question_id: str, answer: str) -> None:
        reached[question_id] = reached.get(question_id, 0) + 1
        bucket = yes if answer == "yes" else no
        bucket[question_id] = bucket.get(question_id, 0) + 1

    if mode == "recorded-paths":
        pathless = [d.item_id for d in session.decisions.values() if d.pathless]
        if pathless:
            raise ModeUnavailableError(
                f"recorded-paths mode unavailable: {len(pathless)} decision(s) "
                "have no recorded answer path"
            )
        for decision in session.decisions.values():
            for step in decision.path:
                tally_step(step.question, step.answer)
        for item_id, steps in session.in_progress.items():
            for step in steps:
                tally_step(step.question, step.answer)
            # The item sits at its current question, reached but unanswered.
            current = session.current_question(item_id).id
            reached[current] = reached.get(current, 0) + 1
    else:
        implied_path_cache: dict[str, tuple] = {}
        for decision in session.decisions.values():
            leaf_id = decision.code.id
            if leaf_id not in implied_path_cache:
                try:
                    implied_path_cache[leaf_id] = session.tree.path_to(leaf_id)
                except Exception as exc:
                    raise ModeUnavailableError(
                        f"inferred-from-codes mode unavailable: {exc}"
                    ) from exc
            for question_id, answer in implied_path_cache[leaf_id]:
                tally_step(question_id, answer)

    per_question = {
        qid: QuestionTally(yes=yes.get(qid, 0), no=no.get(qid, 0), reached=reached[qid])
        for qid in session.tree.questions
        if qid in reached
    }
    unknown = tuple(qid for qid in session.tree.questions if qid not in reached)

    notes = []
    if mode == "inferred-from-codes":
        for (dataset_id, question_id, answer), reported in REPORTED_FLOW_TALLIES.items():
            if session.dataset_id != dataset_id or question_id not in per_question:
                continue
            tally = per_question[question_id]
            computed = tally.yes if answer == "yes" else tally.no
            if computed != reported:
                notes.append(
                    f"{question_id} {answer}-count by code-implied inference is {computed} "
                    f"of {len(session.decisions)}; the originally reported tally for this "
                    f"dataset is {reported}. The divergence is preserved, not reconciled."
                )

    return FlowStats(
        mode=mode,
        dataset_id=session.dataset_id,
        coded_count=len(session.decisions),
        item_count=len(session.dataset),
        per_question=per_question,
        unknown_questions=unknown,
        notes=tuple(notes),
    )


# -- inter-coder agreement ------------------------------------------------------

@dataclass(frozen=True)
class AgreementResult:
    n_common: int
    n_agreeing: int
    percent_agreement: float  # fraction in [0, 1]
    kappa: float

    def display(self) -> str:
        return (
            f"agreement {self.n_agreeing}/{self.n_common} "
            f"({percent_string(self.n_agreeing, self.n_common)}), kappa {self.kappa:.4f}"
        )


def agreement(session_a: Session, session_b: Session) -> AgreementResult:
    """Percent agreement and Cohen's kappa over commonly coded items.

    Codes are compared after merging the two Desired Outcome leaves, matching
    how every report displays them.
    """
    if session_a.dataset_id != session_b.dataset_id:
        raise DatasetMismatchError(
            f"sessions cover different datasets: {session_a.dataset_id!r} "
            f"vs {session_b.dataset_id!r}"
        )
    common = sorted(set(session_a.decisions) & set(session_b.decisions))
    if not common:
        raise NoOverlapError("the sessions have no commonly coded items")

    n = len(common)
    matches = 0
    margin_a: dict[str, int] = {}
    margin_b: dict[str, int] = {}
    for item_id in common:
        code_a = display_code(session_a.decisions[item_id].code.id)
        code_b = display_code(session_b.decisions[item_id].code.id)
        if code_a == code_b:
            matches += 1
        margin_a[code_a] = margin_a.get(code_a, 0) + 1
        margin_b[code_b] = margin_b.get(code_b, 0) + 1

    observed = matches / n
    expected = sum(
        (margin_a.get(code, 0) / n) * (margin_b.get(code, 0) / n)
        for code in set(margin_a) | set(margin_b)
    )
    if expected == 1.0:
        kappa = 1.0  # both coders constant on the same code; agreement is total
    else:
        kappa = (observed - expected) / (1.0 - expected)
    return AgreementResult(
        n_common=n, n_agreeing=matches, percent_agreement=observed, kappa=kappa
    )


# -- report emission -------------------------------------------------------------

Reportable = Union[FrequencyReport, ComparisonMatrix, FlowStats]


def emit_report(report: Reportable, format: str = "table") -> str:
    """Serialize a report deterministically in the requested format."""
    try:
        normalized = FORMAT_ALIASES[format]
    except KeyError:
        raise ReportFormatError(
            f"unknown format {format!r}; expected one of {sorted(set(FORMAT_ALIASES))}"
        ) from None

    if isinstance(report, FrequencyReport):
        renderers = {
            "table": _frequency_table_text,
            "csv": _frequency_csv,
            "json": lambda r: _json_text(r.to_document()),
            "chart": lambda r: _json_text(_frequency_chart(r)),
        }
    elif isinstance(report, ComparisonMatrix):
        renderers = {
            "table": _matrix_table_text,
            "csv": _matrix_csv,
            "json": lambda r: _json_text(r.to_document()),
            "chart": lambda r: _json_text(_matrix_chart(r)),
        }
    elif isinstance(report, FlowStats):
        renderers = {
            "table": _flow_table_text,
            "csv": _flow_csv,
            "json": lambda r: _json_text(r.to_document()),
            "chart": lambda r: _json_text(_flow_chart(r)),
        }
    else:
        raise TypeError(f"cannot emit a report for {type(report).__name__}")
    return renderers[normalized](report)


def _json_text(document: dict) -> str:
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


def _aligned(rows: Sequence[Sequence[str]], right_from: int = 1) -> str:
    """Simple column alignment; first column left, the rest right."""
    if not rows:
        return ""
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = []
        for i, cell in enumerate(row):
            if i < right_from:
                cells.append(cell.ljust(widths[i]))
            else:
                cells.append(cell.rjust(widths[i]))
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def _code_header(code: str) -> str:
    return f"*{code}" if code in ACTIONABLE_DISPLAY_CODES else code


def _frequency_table_text(report: FrequencyReport) -> str:
    codes = report.displayed_codes()
    header = ["Category", "n"] + [_code_header(code) for code in codes]
    rows = [header]
    for category_id, size in report.categories:
        counts = report.per_category.get(category_id, {})
        rows.append(
            [category_id, str(size)]
            + [str(counts[code]) if counts.get(code) else "" for code in codes]
        )
    rows.append(
        [f"Total ({report.coded_count})", ""]
        + [str(report.totals.get(code, 0)) for code in codes]
    )
    if report.coded_count:
        rows.append(
            ["Proportion of Total", ""]
            + [percent_string(report.totals[code], report.coded_count) for code in codes]
        )
    title = report.title or report.dataset_id
    lines = [f"{title} coding results", _aligned(rows, right_from=1)]
    if report.coded_count:
        lines.append(
            f"Actionable: {report.actionable_count}/{report.coded_count} "
            f"({percent_string(report.actionable_count, report.coded_count)})"
        )
    else:
        lines.append("Actionable: undefined (no coded items)")
    lines.append(f"Coverage: {report.coded_count}/{report.item_count} items coded")
    return "\n".join(lines) + "\n"


def _frequency_csv(report: FrequencyReport) -> str:
    out = io.StringIO()
    writer = csv_module.writer(out, lineterminator="\n")
    writer.writerow(["category", "n"] + list(DISPLAY_CODES))
    for category_id, size in report.categories:
        counts = report.per_category.get(category_id, {})
        writer.writerow([category_id, size] + [counts.get(code, 0) for code in DISPLAY_CODES])
    if report.coded_count:
        writer.writerow(
            ["TOTAL", report.coded_count]
            + [report.totals.get(code, 0) for code in DISPLAY_CODES]
        )
    return out.getvalue()


def _frequency_chart(report: FrequencyReport) -> dict:
    groups = list(DISPLAY_CODES) + [ACTIONABLE_ROW]
    values = [report.proportions.get(code, 0.0) for code in DISPLAY_CODES]
    values.append(report.actionable_fraction or 0.0)
    return {
        "kind": "grouped-bar",
        "groups": groups,
        "actionable_groups": [_g for _g in groups if _g in ACTIONABLE_DISPLAY_CODES or _g == ACTIONABLE_ROW],
        "series": [{"label": report.title or report.dataset_id, "values": values}],
    }


def _matrix_table_text(matrix: ComparisonMatrix) -> str:
    header = ["Code"] + [column.label for column in matrix.columns]
    rows = [header]
    for row in matrix.rows:
        rows.append(
            [_code_header(row) if row != ACTIONABLE_ROW else row]
            + [
                percent_string(column.counts[row], column.coded_count)
                if column.coded_count
                else "-"
                for column in matrix.columns
            ]
        )
    return _aligned(rows, right_from=1) + "\n"


def _matrix_csv(matrix: ComparisonMatrix) -> str:
    out = io.StringIO()
    writer = csv_module.writer(out, lineterminator="\n")
    writer.writerow(["code"] + [column.label for column in matrix.columns])
    for row in matrix.rows:
        writer.writerow([row] + [f"{column.values[row]:.10g}" for column in matrix.columns])
    return out.getvalue()


def _matrix_chart(matrix: ComparisonMatrix) -> dict:
    return {
        "kind": "grouped-bar",
        "groups": list(matrix.rows),
        "actionable_groups": list(ACTIONABLE_DISPLAY_CODES) + [ACTIONABLE_ROW],
        "series": [
            {"label": column.label, "values": [column.values[row] for row in matrix.rows]}
            for column in matrix.columns
        ],
    }


def _flow_table_text(stats: FlowStats) -> str:
    header = ["Question", "reached", "yes", "no", "yes % of coded"]
    rows = [header]
    for qid, tally in stats.per_question.items():
        rows.append(
            [
                qid,
                str(tally.reached),
                str(tally.yes),
                str(tally.no),
                percent_string(tally.yes, stats.coded_count) if stats.coded_count else "-",
            ]
        )
    lines = [
        f"Question flow ({stats.mode}) for {stats.dataset_id}: "
        f"{stats.coded_count}/{stats.item_count} items coded",
        _aligned(rows, right_from=1),
    ]
    if stats.unknown_questions:
        lines.append("Unknown (no implied outcome): " + ", ".join(stats.unknown_questions))
    for note in stats.notes:
        lines.append(f"Note: {note}")
    return "\n".join(lines) + "\n"


def _flow_csv(stats: FlowStats) -> str:
    out = io.StringIO()
    writer = csv_module.writer(out, lineterminator="\n")
    writer.writerow(["question", "reached", "yes", "no"])
    for qid, tally in stats.per_question.items():
        writer.writerow([qid, tally.reached, tally.yes, tally.no])
    return out.getvalue()


def _flow_chart(stats: FlowStats) -> dict:
    questions = list(stats.per_question)
    return {
        "kind": "grouped-bar",
        "groups": questions,
        "series": [
            {
                "label": f"{stats.dataset_id} yes-fraction",
                "values": [
                    (stats.per_question[qid].yes / stats.coded_count) if stats.coded_count else 0.0
                    for qid in questions
                ],
            }
        ],
    }
