"""Advice datasets: parsing, validation, export, and the bundled corpora.

A dataset is an ordered, category-partitioned list of advice items. Two
interchangeable file forms are supported:

* JSON document with fields ``dataset_id``, ``title``, ``categories`` and
  ``items``;
* CSV with columns ``item_id, category_id, text, notes`` preceded by a
  comment-line manifest (``# dataset_id: ...``, ``# title: ...``, one
  ``# category: <id> | <title>`` line per category).

Both round-trip losslessly through :func:`export_dataset` /
:func:`export_dataset_csv`.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

DATASET_FORMAT = "sacoding-dataset"
CODES_FORMAT = "sacoding-codes"

BUNDLED_DATASET_IDS = ("dcms-full", "dcms-subtopics", "etsi-provisions")

_BUNDLED_FILES = {
    "dcms-full": "dcms_full.dataset.json",
    "dcms-subtopics": "dcms_subtopics.dataset.json",
    "etsi-provisions": "etsi_provisions.dataset.json",
}
_BUNDLED_CODES_FILES = {
    "dcms-full": "dcms_full.codes.json",
    "dcms-subtopics": "dcms_subtopics.codes.json",
    "etsi-provisions": "etsi_provisions.codes.json",
}


class CorpusError(Exception):
    """Base class for dataset file problems."""


class DatasetParseError(CorpusError):
    """Malformed document; the message carries a record/line locator."""


class DatasetValidationError(CorpusError):
    """Well-formed document violating a dataset invariant."""


@dataclass(frozen=True)
class Category:
    id: str
    title: str


@dataclass(frozen=True)
class AdviceItem:
    """One unit of advice text within a dataset."""

    item_id: str
    category_id: str
    text: str
    notes: Optional[str] = None


@dataclass(frozen=True)
class Dataset:
    """Immutable advice corpus; items keep their source order."""

    dataset_id: str
    title: str
    categories: tuple[Category, ...]
    items: tuple[AdviceItem, ...]

    def __len__(self) -> int:
        return len(self.items)

    def item(self, item_id: str) -> AdviceItem:
        for entry in self.items:
            if entry.item_id == item_id:
                return entry
        raise KeyError(item_id)

    def has_item(self, item_id: str) -> bool:
        return any(entry.item_id == item_id for entry in self.items)

    def item_ids(self) -> tuple[str, ...]:
        return tuple(entry.item_id for entry in self.items)

    def category_ids(self) -> tuple[str, ...]:
        return tuple(category.id for category in self.categories)

    def items_in_category(self, category_id: str) -> tuple[AdviceItem, ...]:
        return tuple(entry for entry in self.items if entry.category_id == category_id)

    def category_sizes(self) -> dict[str, int]:
        sizes = {category.id: 0 for category in self.categories}
        for entry in self.items:
            sizes[entry.category_id] += 1
        return sizes


def _single_line(value: str) -> bool:
    return "\n" not in value and "\r" not in value


def _bad_control_chars(value: str, allow_newline: bool = False) -> bool:
    for ch in value:
        if ch == "\t" or (ch == "\n" and allow_newline):
            continue
        if ord(ch) < 32 or ord(ch) == 127:
            return True
    return False


def _check_identifier(value, what: str, locator: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise DatasetValidationError(f"{locator}: {what} must be a non-empty string")
    if not _single_line(value) or "|" in value:
        raise DatasetValidationError(f"{locator}: {what} {value!r} may not contain newlines or '|'")
    if value != value.strip():
        raise DatasetValidationError(f"{locator}: {what} {value!r} has leading/trailing whitespace")
    if _bad_control_chars(value):
        raise DatasetValidationError(f"{locator}: {what} {value!r} contains control characters")
    return value


def _check_title(value, what: str, locator: str) -> str:
    if not isinstance(value, str) or not _single_line(value):
        raise DatasetValidationError(f"{locator}: {what} must be a single-line string")
    if value != value.strip():
        raise DatasetValidationError(f"{locator}: {what} {value!r} has leading/trailing whitespace")
    if _bad_control_chars(value):
        raise DatasetValidationError(f"{locator}: {what} {value!r} contains control characters")
    return value


def build_dataset(
    dataset_id: str,
    title: str,
    categories: Sequence[tuple[str, str]],
    items: Sequence[Mapping],
) -> Dataset:
    """Validate raw parts and assemble a Dataset."""
    _check_identifier(dataset_id, "dataset_id", "dataset")
    _check_title(title, "title", "dataset")

    seen_categories: dict[str, Category] = {}
    category_list: list[Category] = []
    for index, (category_id, category_title) in enumerate(categories):
        locator = f"category #{index + 1}"
        _check_identifier(category_id, "category id", locator)
        _check_title(category_title, "title", locator)
        if category_id in seen_categories:
            raise DatasetValidationError(f"{locator}: duplicate category id {category_id!r}")
        category = Category(category_id, category_title)
        seen_categories[category_id] = category
        category_list.append(category)

    seen_items: set[str] = set()
    item_list: list[AdviceItem] = []
    for index, raw in enumerate(items):
        locator = f"item #{index + 1}"
        item_id = raw.get("item_id")
        _check_identifier(item_id, "item_id", locator)
        locator = f"item #{index + 1} ({item_id})"
        if item_id in seen_items:
            raise DatasetValidationError(f"{locator}: duplicate item id")
        category_id = raw.get("category_id")
        if category_id not in seen_categories:
            raise DatasetValidationError(f"{locator}: unknown category {category_id!r}")
        text = raw.get("text")
        if not isinstance(text, str) or not text:
            raise DatasetValidationError(f"{locator}: text must be a non-empty string")
        if _bad_control_chars(text, allow_newline=True):
            raise DatasetValidationError(
                f"{locator}: text may not contain control characters ('\\n' line endings only)"
            )
        notes = raw.get("notes")
        if notes is not None and (
            not isinstance(notes, str) or not notes or _bad_control_chars(notes, allow_newline=True)
        ):
            raise DatasetValidationError(f"{locator}: notes must be omitted or a non-empty string")
        seen_items.add(item_id)
        item_list.append(AdviceItem(item_id=item_id, category_id=category_id, text=text, notes=notes))

    return Dataset(
        dataset_id=dataset_id,
        title=title,
        categories=tuple(category_list),
        items=tuple(item_list),
    )


def parse_dataset(source: Union[Mapping, str, Path]) -> Dataset:
    """Parse a dataset from a JSON document/text, CSV text, or file path.

    Paths dispatch on suffix (``.csv`` vs JSON); raw strings are sniffed by
    their first non-blank character.
    """
    if isinstance(source, Mapping):
        return _parse_json_document(source)
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
        if source.suffix.lower() == ".csv":
            return _parse_csv_text(text)
        return _parse_json_text(text)
    stripped = source.lstrip()
    if stripped.startswith("{"):
        return _parse_json_text(source)
    return _parse_csv_text(source)


def _parse_json_text(text: str) -> Dataset:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(document, dict):
        raise DatasetParseError("dataset document must be a JSON object")
    return _parse_json_document(document)


def _parse_json_document(document: Mapping) -> Dataset:
    if document.get("format", DATASET_FORMAT) != DATASET_FORMAT:
        raise DatasetParseError(f"not a dataset document: format={document.get('format')!r}")
    categories_raw = document.get("categories", [])
    if not isinstance(categories_raw, list):
        raise DatasetParseError("field 'categories' must be a list")
    categories = []
    for index, entry in enumerate(categories_raw):
        if not isinstance(entry, Mapping) or "id" not in entry:
            raise DatasetParseError(f"category #{index + 1}: must be an object with 'id' and 'title'")
        categories.append((entry["id"], entry.get("title", "")))
    items_raw = document.get("items", [])
    if not isinstance(items_raw, list):
        raise DatasetParseError("field 'items' must be a list")
    for index, entry in enumerate(items_raw):
        if not isinstance(entry, Mapping):
            raise DatasetParseError(f"item #{index + 1}: must be an object")
    return build_dataset(
        dataset_id=document.get("dataset_id", ""),
        title=document.get("title", ""),
        categories=categories,
        items=items_raw,
    )


_CSV_COLUMNS = ("item_id", "category_id", "text", "notes")


def _parse_csv_text(text: str) -> Dataset:
    manifest: dict[str, str] = {}
    categories: list[tuple[str, str]] = []
    # Split on '\n' only: titles and texts may contain unicode separators
    # that str.splitlines would treat as line breaks.
    lines = text.split("\n")
    body_start = 0
    for index, line in enumerate(lines):
        if not line.startswith("#"):
            break
        body_start = index + 1
        line_number = index + 1
        entry = line[1:].strip()
        if not entry:
            continue
        key, sep, value = entry.partition(":")
        if not sep:
            raise DatasetParseError(f"line {line_number}: manifest line needs 'key: value'")
        key = key.strip()
        value = value.strip()
        if key == "category":
            category_id, sep, category_title = value.partition("|")
            if not sep:
                raise DatasetParseError(f"line {line_number}: category line needs '<id> | <title>'")
            categories.append((category_id.strip(), category_title.strip()))
        elif key in ("dataset_id", "title", "format"):
            manifest[key] = value
        else:
            raise DatasetParseError(f"line {line_number}: unknown manifest key {key!r}")

    if manifest.get("format", DATASET_FORMAT) != DATASET_FORMAT:
        raise DatasetParseError(f"not a dataset document: format={manifest.get('format')!r}")
    if "dataset_id" not in manifest:
        raise DatasetParseError("manifest is missing '# dataset_id: ...'")

    reader = csv.DictReader(io.StringIO("\n".join(lines[body_start:])))
    if reader.fieldnames is None:
        raise DatasetParseError("missing CSV header row")
    if tuple(reader.fieldnames) != _CSV_COLUMNS:
        raise DatasetParseError(
            f"CSV header must be {','.join(_CSV_COLUMNS)}, got {','.join(reader.fieldnames)}"
        )
    items = []
    for record_number, row in enumerate(reader, start=1):
        if any(value is None for value in row.values()) or None in row:
            raise DatasetParseError(f"record {record_number}: wrong number of fields")
        items.append(
            {
                "item_id": row["item_id"],
                "category_id": row["category_id"],
                "text": row["text"],
                "notes": row["notes"] or None,
            }
        )
    return build_dataset(
        dataset_id=manifest["dataset_id"],
        title=manifest.get("title", ""),
        categories=categories,
        items=items,
    )


def export_dataset(dataset: Dataset) -> dict:
    """JSON-ready document; parse_dataset(export_dataset(d)) == d."""
    return {
        "format": DATASET_FORMAT,
        "version": 1,
        "dataset_id": dataset.dataset_id,
        "title": dataset.title,
        "categories": [{"id": c.id, "title": c.title} for c in dataset.categories],
        "items": [
            {
                "item_id": item.item_id,
                "category_id": item.category_id,
                "text": item.text,
                **({"notes": item.notes} if item.notes is not None else {}),
            }
            for item in dataset.items
        ],
    }


def export_dataset_json(dataset: Dataset) -> str:
    return json.dumps(export_dataset(dataset), indent=2, ensure_ascii=False) + "\n"


def export_dataset_csv(dataset: Dataset) -> str:
    """CSV form with the manifest header; round-trips losslessly."""
    out = io.StringIO()
    out.write(f"# format: {DATASET_FORMAT}\n")
    out.write(f"# dataset_id: {dataset.dataset_id}\n")
    out.write(f"# title: {dataset.title}\n")
    for category in dataset.categories:
        out.write(f"# category: {category.id} | {category.title}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for item in dataset.items:
        writer.writerow([item.item_id, item.category_id, item.text, item.notes or ""])
    return out.getvalue()


def _load_bundled(name: str) -> str:
    return resources.files("sacoding.data").joinpath(name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def bundled_dataset(dataset_id: str) -> Dataset:
    try:
        filename = _BUNDLED_FILES[dataset_id]
    except KeyError:
        raise KeyError(f"no bundled dataset {dataset_id!r}; known: {', '.join(BUNDLED_DATASET_IDS)}") from None
    return parse_dataset(_load_bundled(filename))


def bundled_datasets() -> list[Dataset]:
    """The three bundled corpora (13, 28 and 67 items)."""
    return [bundled_dataset(dataset_id) for dataset_id in BUNDLED_DATASET_IDS]


# -- recorded code assignments (replay input) --------------------------------

@dataclass(frozen=True)
class CodeAssignments:
    """Final code per item, as recorded by a previous coding pass."""

    dataset_id: str
    coder_id: str
    assignments: tuple[tuple[str, str], ...]  # (item_id, code_id)
    tags: Mapping[str, tuple[str, ...]]  # item_id -> supplementary tags


def parse_codes(source: Union[Mapping, str, Path]) -> CodeAssignments:
    """Parse a codes document (JSON) holding recorded assignments."""
    if isinstance(source, Path):
        source = source.read_text(encoding="utf-8")
    if isinstance(source, str):
        try:
            document = json.loads(source)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    else:
        document = source
    if not isinstance(document, Mapping) or document.get("format") != CODES_FORMAT:
        raise DatasetParseError("not a codes document (expected format 'sacoding-codes')")
    assignments: list[tuple[str, str]] = []
    tags: dict[str, tuple[str, ...]] = {}
    for index, entry in enumerate(document.get("assignments", [])):
        locator = f"assignment #{index + 1}"
        if not isinstance(entry, Mapping) or "item_id" not in entry or "code" not in entry:
            raise DatasetParseError(f"{locator}: needs 'item_id' and 'code'")
        assignments.append((entry["item_id"], entry["code"]))
        if entry.get("tags"):
            tags[entry["item_id"]] = tuple(entry["tags"])
    return CodeAssignments(
        dataset_id=document.get("dataset_id", ""),
        coder_id=document.get("coder_id", "reference"),
        assignments=tuple(assignments),
        tags=tags,
    )


@lru_cache(maxsize=None)
def bundled_codes(dataset_id: str) -> CodeAssignments:
    """Recorded reference coding for a bundled dataset."""
    try:
        filename = _BUNDLED_CODES_FILES[dataset_id]
    except KeyError:
        raise KeyError(f"no bundled codes for {dataset_id!r}") from None
    return parse_codes(_load_bundled(filename))
