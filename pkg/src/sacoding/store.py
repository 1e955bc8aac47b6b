"""File-backed storage shared by the CLI and the HTTP service.

Layout under the data directory:

    datasets/<dataset_id>.json    ingested datasets (bundled ones are implicit)
    sessions/<session_id>.meta.json
    sessions/<session_id>.events.jsonl   append-only event log

Every mutation is appended to the session's event log and fsynced before the
caller acknowledges it; sessions are rebuilt by folding their logs.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Union

from . import corpus
from .corpus import CodeAssignments, Dataset
from .session import CheckpointError, Session
from .tree import CodingTree, default_tree, load_tree

META_FORMAT = "sacoding-session-meta"

DATASET_ALIASES = {
    "etsi": "etsi-provisions",
    "dcms-sub": "dcms-subtopics",
}


class StoreError(Exception):
    pass


def _canonical_dataset_id(ref: str) -> Optional[str]:
    if ref in corpus.BUNDLED_DATASET_IDS:
        return ref
    return DATASET_ALIASES.get(ref)


class DataStore:
    """One data directory holding ingested datasets and session logs."""

    def __init__(self, data_dir: Union[str, Path]):
        self.data_dir = Path(data_dir)
        self.datasets_dir = self.data_dir / "datasets"
        self.sessions_dir = self.data_dir / "sessions"
        self.datasets_dir.mkdir(parents=True, exist_ok=True)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._persisted_seq: dict[str, int] = {}

    # -- tree -----------------------------------------------------------------

    def tree(self) -> CodingTree:
        """The active tree: data_dir/tree.json when present, else the default."""
        override = self.data_dir / "tree.json"
        if override.exists():
            return load_tree(override)
        return default_tree()

    # -- datasets ---------------------------------------------------------------

    def datasets(self) -> dict[str, Dataset]:
        """All known datasets, bundled first, then ingested ones by filename."""
        known = {d.dataset_id: d for d in corpus.bundled_datasets()}
        for path in sorted(self.datasets_dir.glob("*.json")):
            dataset = corpus.parse_dataset(path)
            if dataset.dataset_id not in known:
                known[dataset.dataset_id] = dataset
        return known

    def get_dataset(self, ref: str) -> Dataset:
        """Resolve a dataset by id, alias, or file path."""
        known = self.datasets()
        if ref in known:
            return known[ref]
        alias = _canonical_dataset_id(ref)
        if alias and alias in known:
            return known[alias]
        path = Path(ref)
        if path.exists():
            return corpus.parse_dataset(path)
        raise StoreError(
            f"unknown dataset {ref!r}; known: {', '.join(sorted(known))}"
        )

    def save_dataset(self, dataset: Dataset) -> Path:
        if dataset.dataset_id in self.datasets():
            raise StoreError(f"dataset {dataset.dataset_id!r} already exists")
        path = self.datasets_dir / f"{_safe_name(dataset.dataset_id)}.json"
        _atomic_write(path, corpus.export_dataset_json(dataset))
        return path

    # -- recorded codes -----------------------------------------------------------

    def get_codes(self, ref: str) -> CodeAssignments:
        """Resolve a codes document by bundled alias or file path."""
        path = Path(ref)
        if path.exists():
            return corpus.parse_codes(path)
        name = ref
        if name.startswith("appendix-"):
            name = name[len("appendix-"):]
        if name.endswith("-codes"):
            name = name[: -len("-codes")]
        dataset_id = _canonical_dataset_id(name) or name
        try:
            return corpus.bundled_codes(dataset_id)
        except KeyError:
            raise StoreError(
                f"unknown codes file {ref!r} (not a path or a bundled alias)"
            ) from None

    # -- sessions ---------------------------------------------------------------

    def _meta_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{_safe_name(session_id)}.meta.json"

    def _events_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{_safe_name(session_id)}.events.jsonl"

    def session_ids(self) -> list[str]:
        ids = []
        for path in sorted(self.sessions_dir.glob("*.meta.json")):
            try:
                meta = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                continue
            if meta.get("format") == META_FORMAT:
                ids.append(meta["session_id"])
        return ids

    def has_session(self, session_id: str) -> bool:
        return self._meta_path(session_id).exists()

    def load_session(self, session_id: str) -> Session:
        meta_path = self._meta_path(session_id)
        if not meta_path.exists():
            raise StoreError(f"unknown session {session_id!r}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("format") != META_FORMAT:
            raise StoreError(f"{meta_path} is not a session meta file")
        dataset = self.get_dataset(meta["dataset_id"])
        tree = self.tree()
        events = []
        events_path = self._events_path(session_id)
        if events_path.exists():
            with events_path.open(encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if line:
                        events.append(json.loads(line))
        try:
            session = Session.from_event_log(meta, events, dataset, tree)
        except CheckpointError as exc:
            raise StoreError(f"cannot load session {session_id!r}: {exc}") from exc
        self._persisted_seq[session_id] = len(session.events)
        return session

    def save_new_session(self, session: Session, overwrite: bool = False) -> None:
        meta_path = self._meta_path(session.session_id)
        if meta_path.exists() and not overwrite:
            raise StoreError(f"session {session.session_id!r} already exists")
        meta = {
            "format": META_FORMAT,
            "schema_version": 1,
            "session_id": session.session_id,
            "dataset_id": session.dataset_id,
            "coder_id": session.coder_id,
            "tree_fingerprint": session.tree_fingerprint,
            "created_at": session.created_at,
            "updated_at": session.updated_at,
        }
        _atomic_write(meta_path, json.dumps(meta, indent=2) + "\n")
        events_path = self._events_path(session.session_id)
        with events_path.open("w", encoding="utf-8") as handle:
            for event in session.events:
                handle.write(json.dumps(event, separators=(",", ":")) + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        self._persisted_seq[session.session_id] = len(session.events)

    def append_events(self, session: Session) -> None:
        """Durably append any events recorded since the last persist."""
        persisted = self._persisted_seq.get(session.session_id)
        if persisted is None:
            raise StoreError(
                f"session {session.session_id!r} was never saved to this store"
            )
        fresh = session.events[persisted:]
        if not fresh:
            return
        with self._events_path(session.session_id).open("a", encoding="utf-8") as handle:
            for event in fresh:
                handle.write(json.dumps(event, separators=(",", ":")) + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        self._persisted_seq[session.session_id] = len(session.events)


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-._" else "_" for ch in name)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
