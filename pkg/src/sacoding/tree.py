"""SAcoding decision tree: definition loading, validation, and traversal.

The tree is data, not code. A tree-definition document (JSON) lists the
questions (id, text, yes/no targets) and the leaf codes (id, label,
actionable flag, definition text). The bundled default tree carries the
eleven questions Q1..Q11 and the twelve-code taxonomy.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterator, Literal, Mapping, Union

Answer = Literal["yes", "no"]
ANSWERS: tuple[Answer, Answer] = ("yes", "no")

# Leaf ids whose codes mark an advice item as actionable.
ACTIONABLE_LEAF_IDS = frozenset({"P3", "P4", "P5", "P6"})

# The twelve codes of the default taxonomy. T and Tprime share a label but
# are distinct leaf identities (they sit on different branches).
DEFAULT_LEAF_IDS = (
    "M1", "M2", "N1", "N1.1", "T", "Tprime",
    "P1", "P2", "P3", "P4", "P5", "P6",
)

TREE_FORMAT = "sacoding-tree"

DocumentLike = Union[str, Path, Mapping]


class TreeError(Exception):
    """Base class for tree-definition problems."""


class TreeParseError(TreeError):
    """The definition document is syntactically malformed."""


class TreeValidationError(TreeError):
    """The definition parsed but violates a structural invariant."""


class UnknownQuestionError(TreeError):
    """A traversal referenced a question id the tree does not define."""


@dataclass(frozen=True)
class LeafCode:
    """A terminal code of the taxonomy."""

    id: str
    label: str
    actionable: bool
    description: str = ""


@dataclass(frozen=True)
class Question:
    """One yes/no question; `yes`/`no` name the next question or a leaf."""

    id: str
    text: str
    yes: str
    no: str


AnswerStepTuple = tuple[str, Answer]
AnswerSequence = tuple[AnswerStepTuple, ...]


@dataclass(frozen=True)
class CodingTree:
    """Validated, immutable decision tree. Safe for concurrent reads."""

    root: str
    questions: Mapping[str, Question]
    leaves: Mapping[str, LeafCode]
    fingerprint: str

    def is_leaf(self, ref: str) -> bool:
        return ref in self.leaves

    def leaf(self, ref: str) -> LeafCode:
        return self.leaves[ref]

    def question(self, ref: str) -> Question:
        try:
            return self.questions[ref]
        except KeyError:
            raise UnknownQuestionError(f"unknown question id: {ref!r}") from None

    def step(self, at: str, answer: Answer) -> str:
        """Return the node reached from question `at` under `answer`."""
        question = self.question(at)
        if answer == "yes":
            return question.yes
        if answer == "no":
            return question.no
        raise ValueError(f"answer must be 'yes' or 'no', got {answer!r}")

    def walk(self, answers) -> str:
        """Follow a plain yes/no sequence from the root; return the last node.

        Stops early when a leaf is reached. Raises if the sequence runs past
        a leaf.
        """
        node = self.root
        for answer in answers:
            if self.is_leaf(node):
                raise TreeError(f"answer sequence continues past leaf {node!r}")
            node = self.step(node, answer)
        return node

    def enumerate_paths(self) -> list[tuple[AnswerSequence, LeafCode]]:
        """Every root-to-leaf path, depth first, yes branch before no."""
        paths: list[tuple[AnswerSequence, LeafCode]] = []

        def descend(node: str, prefix: AnswerSequence) -> None:
            if self.is_leaf(node):
                paths.append((prefix, self.leaves[node]))
                return
            question = self.questions[node]
            descend(question.yes, prefix + ((node, "yes"),))
            descend(question.no, prefix + ((node, "no"),))

        descend(self.root, ())
        return paths

    def path_to(self, leaf_id: str) -> AnswerSequence:
        """The unique answer sequence reaching `leaf_id`.

        Raises TreeError when the leaf occupies zero or several positions,
        in which case code-implied inference is not possible.
        """
        matches = [seq for seq, leaf in self.enumerate_paths() if leaf.id == leaf_id]
        if not matches:
            raise TreeError(f"leaf {leaf_id!r} is not reachable")
        if len(matches) > 1:
            raise TreeError(f"leaf {leaf_id!r} occupies {len(matches)} positions; path is ambiguous")
        return matches[0]

    def to_document(self) -> dict:
        """Definition document that round-trips through load_tree()."""
        return {
            "format": TREE_FORMAT,
            "version": 1,
            "root": self.root,
            "questions": [
                {"id": q.id, "text": q.text, "yes": q.yes, "no": q.no}
                for q in self.questions.values()
            ],
            "leaves": [
                {
                    "id": leaf.id,
                    "label": leaf.label,
                    "actionable": leaf.actionable,
                    "description": leaf.description,
                }
                for leaf in self.leaves.values()
            ],
        }


def classify_actionable(code: LeafCode) -> bool:
    """True iff the code marks actionable advice.

    For the default taxonomy this is exactly {P3, P4, P5, P6}; validation
    pins the flag to those ids whenever they appear in a definition.
    """
    return code.actionable


def fingerprint_document(document: Mapping) -> str:
    """Content hash of a definition document (order-insensitive)."""
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_document(definition: DocumentLike) -> Mapping:
    if isinstance(definition, Mapping):
        return definition
    if isinstance(definition, Path):
        text = definition.read_text(encoding="utf-8")
    else:
        text = definition
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeParseError(f"invalid JSON in tree definition: {exc}") from exc
    if not isinstance(document, dict):
        raise TreeParseError("tree definition must be a JSON object")
    return document


def _require(document: Mapping, field: str, kind: type):
    try:
        value = document[field]
    except KeyError:
        raise TreeParseError(f"tree definition missing field {field!r}") from None
    if not isinstance(value, kind):
        raise TreeParseError(f"tree definition field {field!r} must be {kind.__name__}")
    return value


def load_tree(definition: DocumentLike) -> CodingTree:
    """Parse and validate a tree-definition document.

    Accepts a JSON string, a path to a JSON file, or an already-decoded
    mapping. Raises TreeParseError for malformed documents and
    TreeValidationError naming the first violated structural invariant.
    """
    document = _read_document(definition)
    if document.get("format", TREE_FORMAT) != TREE_FORMAT:
        raise TreeParseError(f"not a tree definition: format={document.get('format')!r}")

    root = _require(document, "root", str)
    raw_questions = _require(document, "questions", list)
    raw_leaves = _require(document, "leaves", list)

    questions: dict[str, Question] = {}
    for entry in raw_questions:
        if not isinstance(entry, Mapping):
            raise TreeParseError("question entries must be objects")
        question = Question(
            id=_require(entry, "id", str),
            text=_require(entry, "text", str),
            yes=_require(entry, "yes", str),
            no=_require(entry, "no", str),
        )
        if not question.text.strip():
            raise TreeValidationError(f"question {question.id!r} has empty text")
        if question.id in questions:
            raise TreeValidationError(f"duplicate question id: {question.id!r}")
        questions[question.id] = question

    leaves: dict[str, LeafCode] = {}
    for entry in raw_leaves:
        if not isinstance(entry, Mapping):
            raise TreeParseError("leaf entries must be objects")
        leaf = LeafCode(
            id=_require(entry, "id", str),
            label=_require(entry, "label", str),
            actionable=_require(entry, "actionable", bool),
            description=str(entry.get("description", "")),
        )
        if leaf.id in leaves:
            raise TreeValidationError(f"duplicate leaf id: {leaf.id!r}")
        if leaf.id in questions:
            raise TreeValidationError(f"id {leaf.id!r} declared as both question and leaf")
        if leaf.id in DEFAULT_LEAF_IDS and leaf.actionable != (leaf.id in ACTIONABLE_LEAF_IDS):
            raise TreeValidationError(
                f"leaf {leaf.id!r} has actionable={leaf.actionable}; "
                f"the taxonomy fixes it to {leaf.id in ACTIONABLE_LEAF_IDS}"
            )
        leaves[leaf.id] = leaf

    tree = CodingTree(
        root=root,
        questions=questions,
        leaves=leaves,
        fingerprint=fingerprint_document(
            {
                "root": root,
                "questions": sorted(
                    ({"id": q.id, "text": q.text, "yes": q.yes, "no": q.no} for q in questions.values()),
                    key=lambda q: q["id"],
                ),
                "leaves": sorted(
                    (
                        {"id": c.id, "label": c.label, "actionable": c.actionable, "description": c.description}
                        for c in leaves.values()
                    ),
                    key=lambda c: c["id"],
                ),
            }
        ),
    )
    _validate_structure(tree)
    return tree


def _validate_structure(tree: CodingTree) -> None:
    if not tree.questions:
        raise TreeValidationError("tree defines no questions")
    if tree.root not in tree.questions:
        raise TreeValidationError(f"root {tree.root!r} is not a defined question")

    # Dangling references first: every edge target must resolve.
    for question in tree.questions.values():
        for branch, target in (("yes", question.yes), ("no", question.no)):
            if target not in tree.questions and target not in tree.leaves:
                raise TreeValidationError(
                    f"dangling reference: {question.id}.{branch} -> {target!r} "
                    "is neither a question nor a leaf"
                )

    # Tree shape: each question entered by at most one edge, root by none.
    question_parents: dict[str, str] = {}
    leaf_positions: dict[str, int] = {leaf_id: 0 for leaf_id in tree.leaves}
    for question in tree.questions.values():
        for target in (question.yes, question.no):
            if target in tree.questions:
                if target == tree.root:
                    raise TreeValidationError(f"cycle: edge from {question.id!r} re-enters root {target!r}")
                if target in question_parents:
                    raise TreeValidationError(
                        f"question {target!r} is targeted by both "
                        f"{question_parents[target]!r} and {question.id!r}"
                    )
                question_parents[target] = question.id
            else:
                leaf_positions[target] += 1

    # Cycle check along parent chains (single-parent structure makes this cheap).
    for start in tree.questions:
        seen = {start}
        node = start
        while node in question_parents:
            node = question_parents[node]
            if node in seen:
                raise TreeValidationError(f"cycle detected through question {node!r}")
            seen.add(node)

    # Reachability from the root.
    reachable: set[str] = set()
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node in reachable or node in tree.leaves:
            continue
        reachable.add(node)
        question = tree.questions[node]
        stack.extend((question.yes, question.no))
    for question_id in tree.questions:
        if question_id not in reachable:
            raise TreeValidationError(f"unreachable question: {question_id!r}")
    for leaf_id, positions in leaf_positions.items():
        if positions == 0:
            raise TreeValidationError(f"unreachable leaf code: {leaf_id!r}")

    # Binary count law: leaf positions = question nodes + 1.
    total_positions = sum(leaf_positions.values())
    if total_positions != len(tree.questions) + 1:
        raise TreeValidationError(
            f"count law violated: {total_positions} leaf positions "
            f"for {len(tree.questions)} questions"
        )


def iter_question_ids(tree: CodingTree) -> Iterator[str]:
    return iter(tree.questions)


@lru_cache(maxsize=1)
def default_tree() -> CodingTree:
    """The bundled default tree (11 questions, 12 leaf codes)."""
    text = resources.files("sacoding.data").joinpath("default_tree.json").read_text(encoding="utf-8")
    return load_tree(text)


def default_tree_document() -> dict:
    return default_tree().to_document()
