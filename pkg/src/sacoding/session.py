"""Coding sessions: a coder's progress through one dataset.

State is event-sourced: every mutation appends an event (answer, finalize,
undo, tags) and the materialized state is a pure fold over that log, so a
session can be rebuilt from its log and an undo is a cheap append. Recorded
codings without answer paths are imported as pathless decisions (finalize
events with an empty path).
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .corpus import Dataset
from .tree import Answer, CodingTree, LeafCode, Question

SESSION_FORMAT = "sacoding-session"
SESSION_SCHEMA_VERSION = 1

UNFOCUSED_TAG = "Unfocused"
UNFOCUSED_CODE = "M1"


class SessionError(Exception):
    """Base class for session rule violations."""


class UnknownItemError(SessionError):
    pass


class AlreadyFinalizedError(SessionError):
    pass


class NotFinalizedError(SessionError):
    pass


class NothingToUndoError(SessionError):
    pass


class TagRuleError(SessionError):
    pass


class UnknownCodeError(SessionError):
    pass


class DuplicateAssignmentError(SessionError):
    pass


class CheckpointError(SessionError):
    """Checkpoint document malformed or incompatible (schema/fingerprint)."""


@dataclass(frozen=True)
class AnswerStep:
    question: str
    answer: Answer


@dataclass(frozen=True)
class CodingDecision:
    """Final code for one item, with the answer path that produced it.

    Imported (replay) decisions have no recorded path: pathless=True and an
    empty path. The "Unfocused" supplementary tag is only valid on M1.
    """

    item_id: str
    code: LeafCode
    path: tuple[AnswerStep, ...] = ()
    supplementary_tags: frozenset[str] = frozenset()
    pathless: bool = False


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _fresh_session_id() -> str:
    return uuid.uuid4().hex[:12]


Clock = Callable[[], str]


@dataclass
class Session:
    """Single-coder pass over a dataset; mutations must be serialized."""

    session_id: str
    dataset: Dataset
    tree: CodingTree
    coder_id: str
    created_at: str
    updated_at: str
    decisions: dict[str, CodingDecision] = field(default_factory=dict)
    in_progress: dict[str, list[AnswerStep]] = field(default_factory=dict)
    events: list[dict] = field(default_factory=list)
    clock: Clock = _now_iso

    # -- construction ---------------------------------------------------------

    @classmethod
    def create(
        cls,
        dataset: Dataset,
        tree: CodingTree,
        coder_id: str,
        session_id: Optional[str] = None,
        clock: Clock = _now_iso,
    ) -> "Session":
        now = clock()
        return cls(
            session_id=session_id or _fresh_session_id(),
            dataset=dataset,
            tree=tree,
            coder_id=coder_id,
            created_at=now,
            updated_at=now,
            clock=clock,
        )

    @classmethod
    def import_recorded_codes(
        cls,
        dataset: Dataset,
        tree: CodingTree,
        assignments: Iterable[tuple[str, str]],
        coder_id: str = "replay",
        session_id: Optional[str] = None,
        clock: Clock = _now_iso,
    ) -> "Session":
        """Build a pathless session from (item_id, code_id) pairs.

        Code ids are matched against the tree's leaves; "T" names the leaf T
        (the alias "T'" is accepted for the second Desired Outcome leaf).
        """
        session = cls.create(dataset, tree, coder_id, session_id=session_id, clock=clock)
        seen: set[str] = set()
        for item_id, code_id in assignments:
            if not dataset.has_item(item_id):
                raise UnknownItemError(f"item {item_id!r} is not in dataset {dataset.dataset_id!r}")
            if item_id in seen:
                raise DuplicateAssignmentError(f"item {item_id!r} assigned twice")
            resolved = "Tprime" if code_id == "T'" else code_id
            if resolved not in tree.leaves:
                raise UnknownCodeError(f"unknown code {code_id!r}")
            seen.add(item_id)
            session._record({"type": "finalize", "item": item_id, "code": resolved})
        return session

    # -- identity / views -----------------------------------------------------

    @property
    def dataset_id(self) -> str:
        return self.dataset.dataset_id

    @property
    def tree_fingerprint(self) -> str:
        return self.tree.fingerprint

    def progress(self) -> tuple[int, int]:
        return len(self.decisions), len(self.dataset)

    def is_complete(self) -> bool:
        return len(self.decisions) == len(self.dataset)

    def pending_items(self) -> list[str]:
        """Uncoded item ids in dataset order (in-progress ones included)."""
        return [item.item_id for item in self.dataset.items if item.item_id not in self.decisions]

    def next_pending(self) -> Optional[str]:
        pending = self.pending_items()
        return pending[0] if pending else None

    def path_of(self, item_id: str) -> tuple[AnswerStep, ...]:
        self._require_item(item_id)
        if item_id in self.decisions:
            return self.decisions[item_id].path
        return tuple(self.in_progress.get(item_id, ()))

    def current_question(self, item_id: str) -> Question:
        """The question the coder faces next for a non-finalized item."""
        self._require_item(item_id)
        if item_id in self.decisions:
            raise AlreadyFinalizedError(f"item {item_id!r} is already finalized")
        node = self.tree.root
        for step in self.in_progress.get(item_id, ()):
            node = self.tree.step(step.question, step.answer)
        return self.tree.question(node)

    # -- mutations ------------------------------------------------------------

    def answer(self, item_id: str, answer: Answer) -> Union[Question, CodingDecision]:
        """Record one answer; returns the next question or the final decision."""
        if answer not in ("yes", "no"):
            raise ValueError(f"answer must be 'yes' or 'no', got {answer!r}")
        question = self.current_question(item_id)  # validates item state
        target = self.tree.step(question.id, answer)
        self._record({"type": "answer", "item": item_id, "question": question.id, "answer": answer})
        if self.tree.is_leaf(target):
            self._record({"type": "finalize", "item": item_id, "code": target})
            return self.decisions[item_id]
        return self.tree.question(target)

    def undo(self, item_id: str) -> Question:
        """Remove the most recent step (reopening a finalized item if needed).

        Returns the question now current for the item (the root question when
        the item reverted to an untouched state).
        """
        self._require_item(item_id)
        if item_id not in self.decisions and not self.in_progress.get(item_id):
            raise NothingToUndoError(f"nothing to undo for item {item_id!r}")
        self._record({"type": "undo", "item": item_id})
        return self.current_question(item_id)

    def set_supplementary_tags(self, item_id: str, tags: Iterable[str]) -> CodingDecision:
        """Replace the supplementary tags on a finalized item."""
        self._require_item(item_id)
        decision = self.decisions.get(item_id)
        if decision is None:
            raise NotFinalizedError(f"item {item_id!r} has no finalized decision")
        tag_set = sorted({tag.strip() for tag in tags if tag and tag.strip()})
        if UNFOCUSED_TAG in tag_set and decision.code.id != UNFOCUSED_CODE:
            raise TagRuleError(
                f"tag {UNFOCUSED_TAG!r} is only permitted on {UNFOCUSED_CODE}, "
                f"not on {decision.code.id}"
            )
        self._record({"type": "tags", "item": item_id, "tags": tag_set})
        return self.decisions[item_id]

    # -- event log ------------------------------------------------------------

    def _require_item(self, item_id: str) -> None:
        if not self.dataset.has_item(item_id):
            raise UnknownItemError(f"item {item_id!r} is not in dataset {self.dataset_id!r}")

    def _record(self, event: dict) -> None:
        event = dict(event)
        event["seq"] = len(self.events) + 1
        event["at"] = self.clock()
        self._apply(event)
        self.events.append(event)
        self.updated_at = event["at"]

    def _apply(self, event: dict) -> None:
        """Fold one event into the materialized state."""
        kind = event["type"]
        item_id = event["item"]
        if kind == "answer":
            self.in_progress.setdefault(item_id, []).append(
                AnswerStep(question=event["question"], answer=event["answer"])
            )
        elif kind == "finalize":
            path = tuple(self.in_progress.get(item_id, ()))
            if event["code"] not in self.tree.leaves:
                raise SessionError(f"finalize event names unknown code {event['code']!r}")
            code = self.tree.leaf(event["code"])
            if path:
                terminal = self.tree.root
                for step in path:
                    terminal = self.tree.step(step.question, step.answer)
                if terminal != code.id:
                    raise SessionError(
                        f"finalize event for {item_id!r} names {code.id!r} "
                        f"but the path ends at {terminal!r}"
                    )
            self.in_progress.pop(item_id, None)
            self.decisions[item_id] = CodingDecision(
                item_id=item_id,
                code=code,
                path=path,
                pathless=not path,
            )
        elif kind == "undo":
            if item_id in self.decisions:
                decision = self.decisions.pop(item_id)
                remaining = list(decision.path[:-1])
                if remaining:
                    self.in_progress[item_id] = remaining
            elif self.in_progress.get(item_id):
                steps = self.in_progress[item_id]
                steps.pop()
                if not steps:
                    del self.in_progress[item_id]
            else:
                raise SessionError(f"undo event for {item_id!r} with nothing to undo")
        elif kind == "tags":
            if item_id not in self.decisions:
                raise SessionError(f"tags event for non-finalized item {item_id!r}")
            decision = self.decisions[item_id]
            self.decisions[item_id] = replace(
                decision, supplementary_tags=frozenset(event["tags"])
            )
        else:
            raise CheckpointError(f"unknown event type {kind!r}")

    def verify_path_consistency(self) -> None:
        """Re-check that every recorded path replays to its stored code."""
        for decision in self.decisions.values():
            if decision.pathless:
                continue
            node = self.tree.root
            for step in decision.path:
                node = self.tree.step(step.question, step.answer)
            if node != decision.code.id:
                raise SessionError(
                    f"decision for {decision.item_id!r} is inconsistent: "
                    f"path replays to {node!r}, stored code is {decision.code.id!r}"
                )

    # -- persistence ----------------------------------------------------------

    def data_model(self) -> dict:
        """Canonical data-model view (no ids, clocks, or log): what was coded.

        Two sessions that coded the same items the same way produce identical
        documents, however the answers were entered.
        """
        return {
            "dataset_id": self.dataset_id,
            "tree_fingerprint": self.tree_fingerprint,
            "decisions": [
                _decision_doc(self.decisions[item_id])
                for item_id in sorted(self.decisions)
            ],
            "in_progress": {
                item_id: [{"question": s.question, "answer": s.answer} for s in steps]
                for item_id, steps in sorted(self.in_progress.items())
            },
        }

    def checkpoint(self) -> dict:
        """Full session document; restore() rebuilds an identical session."""
        return {
            "format": SESSION_FORMAT,
            "schema_version": SESSION_SCHEMA_VERSION,
            "session_id": self.session_id,
            "dataset_id": self.dataset_id,
            "coder_id": self.coder_id,
            "tree_fingerprint": self.tree_fingerprint,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "events": [dict(event) for event in self.events],
            "decisions": [
                _decision_doc(self.decisions[item_id]) for item_id in sorted(self.decisions)
            ],
            "in_progress": {
                item_id: [{"question": s.question, "answer": s.answer} for s in steps]
                for item_id, steps in sorted(self.in_progress.items())
            },
        }

    @classmethod
    def restore(cls, document: Mapping, dataset: Dataset, tree: CodingTree,
                clock: Clock = _now_iso) -> "Session":
        """Rebuild a session from a checkpoint, verifying compatibility.

        The event log is replayed and cross-checked against the checkpoint's
        materialized decisions; any divergence means a corrupt document.
        """
        if document.get("format") != SESSION_FORMAT:
            raise CheckpointError(f"not a session checkpoint: format={document.get('format')!r}")
        if document.get("schema_version") != SESSION_SCHEMA_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint schema_version={document.get('schema_version')!r} "
                f"(expected {SESSION_SCHEMA_VERSION})"
            )
        if document.get("dataset_id") != dataset.dataset_id:
            raise CheckpointError(
                f"checkpoint is for dataset {document.get('dataset_id')!r}, "
                f"got {dataset.dataset_id!r}"
            )
        if document.get("tree_fingerprint") != tree.fingerprint:
            raise CheckpointError(
                "tree fingerprint mismatch: the checkpoint was coded against a "
                "different tree definition"
            )
        session = cls.from_event_log(
            meta={
                "session_id": document["session_id"],
                "dataset_id": document["dataset_id"],
                "coder_id": document.get("coder_id", ""),
                "tree_fingerprint": document["tree_fingerprint"],
                "created_at": document.get("created_at", ""),
                "updated_at": document.get("updated_at", ""),
            },
            events=document.get("events", []),
            dataset=dataset,
            tree=tree,
            clock=clock,
        )
        materialized = {
            "decisions": document.get("decisions", []),
            "in_progress": document.get("in_progress", {}),
        }
        folded = session.data_model()
        if materialized["decisions"] != folded["decisions"] or {
            k: v for k, v in materialized["in_progress"].items()
        } != folded["in_progress"]:
            raise CheckpointError("checkpoint is corrupt: event log and materialized state disagree")
        return session

    @classmethod
    def from_event_log(
        cls,
        meta: Mapping,
        events: Sequence[Mapping],
        dataset: Dataset,
        tree: CodingTree,
        clock: Clock = _now_iso,
    ) -> "Session":
        """Rebuild session state by folding a raw event log."""
        if meta.get("dataset_id") != dataset.dataset_id:
            raise CheckpointError(
                f"event log is for dataset {meta.get('dataset_id')!r}, got {dataset.dataset_id!r}"
            )
        if meta.get("tree_fingerprint") != tree.fingerprint:
            raise CheckpointError("tree fingerprint mismatch for event log")
        session = cls(
            session_id=meta["session_id"],
            dataset=dataset,
            tree=tree,
            coder_id=meta.get("coder_id", ""),
            created_at=meta.get("created_at", ""),
            updated_at=meta.get("updated_at", ""),
            clock=clock,
        )
        for event in events:
            event = dict(event)
            session._apply(event)
            session.events.append(event)
        if session.events:
            session.updated_at = session.events[-1].get("at", session.updated_at)
        return session


def _decision_doc(decision: CodingDecision) -> dict:
    return {
        "item_id": decision.item_id,
        "code": decision.code.id,
        "pathless": decision.pathless,
        "path": [{"question": s.question, "answer": s.answer} for s in decision.path],
        "tags": sorted(decision.supplementary_tags),
    }
