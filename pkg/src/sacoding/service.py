"""Local HTTP facade over datasets, sessions, coding steps, and analytics.

Single-user, local-first: binds loopback by default, no authentication.
Every response is an envelope with exactly one of ``payload`` (status "ok")
or ``error`` (status "error"). Mutations are serialized per session and
durably appended to the session's event log before the response is sent.
"""

from __future__ import annotations

import logging
import threading
from typing import Literal, Optional

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import analytics, corpus
from .analytics import AnalyticsError, ModeUnavailableError, ReportFormatError
from .corpus import CorpusError
from .session import (
    AlreadyFinalizedError,
    NothingToUndoError,
    NotFinalizedError,
    Session,
    SessionError,
    TagRuleError,
    UnknownItemError,
)
from .store import DataStore, StoreError
from .tree import Question

logger = logging.getLogger(__name__)


def ok(payload, status_code: int = 200) -> JSONResponse:
    return JSONResponse({"status": "ok", "payload": payload}, status_code=status_code)


def error(code: str, message: str, status_code: int) -> JSONResponse:
    return JSONResponse(
        {"status": "error", "error": {"code": code, "message": message}},
        status_code=status_code,
    )


class ApiError(Exception):
    def __init__(self, code: str, message: str, status_code: int):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status_code = status_code


class CreateSessionBody(BaseModel):
    dataset_id: str
    coder_id: str = "coder"


class AnswerBody(BaseModel):
    answer: Literal["yes", "no"]


class UndoBody(BaseModel):
    token: Optional[str] = None


class TagsBody(BaseModel):
    tags: list[str]


def _question_doc(question: Question) -> dict:
    return {"id": question.id, "text": question.text}


def _decision_payload(session: Session, item_id: str) -> dict:
    decision = session.decisions[item_id]
    return {
        "item_id": decision.item_id,
        "code": {
            "id": decision.code.id,
            "label": decision.code.label,
            "actionable": decision.code.actionable,
            "description": decision.code.description,
        },
        "pathless": decision.pathless,
        "path": [{"question": s.question, "answer": s.answer} for s in decision.path],
        "tags": sorted(decision.supplementary_tags),
    }


def _progress_doc(session: Session) -> dict:
    coded, total = session.progress()
    return {"coded": coded, "total": total}


def _session_summary(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "dataset_id": session.dataset_id,
        "coder_id": session.coder_id,
        "tree_fingerprint": session.tree_fingerprint,
        "created_at": session.created_at,
        "updated_at": session.updated_at,
        "progress": _progress_doc(session),
    }


def create_app(store: DataStore) -> FastAPI:
    """Build the service over one data directory; loads persisted sessions."""
    app = FastAPI(title="sacoding service", docs_url=None, redoc_url=None)

    sessions: dict[str, Session] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()
    # item_id -> (token, cached response payload); idempotent undo support
    undo_tokens: dict[str, dict[str, tuple[str, dict]]] = {}

    for session_id in store.session_ids():
        try:
            sessions[session_id] = store.load_session(session_id)
            locks[session_id] = threading.Lock()
        except StoreError as exc:
            logger.warning("skipping session %s: %s", session_id, exc)

    def get_session(session_id: str) -> tuple[Session, threading.Lock]:
        with registry_lock:
            if session_id not in sessions:
                raise ApiError("not_found", f"unknown session {session_id!r}", 404)
            return sessions[session_id], locks[session_id]

    # -- error mapping -------------------------------------------------------

    @app.exception_handler(ApiError)
    async def handle_api_error(_: Request, exc: ApiError):
        return error(exc.code, exc.message, exc.status_code)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_: Request, exc: RequestValidationError):
        return error("validation", str(exc.errors()[:1]), 400)

    ERROR_MAP = [
        (UnknownItemError, "unknown_item", 404),
        (AlreadyFinalizedError, "already_finalized", 409),
        (NothingToUndoError, "nothing_to_undo", 409),
        (NotFinalizedError, "not_finalized", 409),
        (TagRuleError, "tag_rule", 409),
        (ModeUnavailableError, "mode_unavailable", 409),
        (ReportFormatError, "bad_format", 400),
        (SessionError, "session_error", 400),
        (AnalyticsError, "analytics_error", 400),
        (CorpusError, "bad_dataset", 400),
        (StoreError, "store_error", 400),
    ]

    def _register(exc_type: type, code: str, status: int) -> None:
        @app.exception_handler(exc_type)
        async def handler(_: Request, exc: Exception, code=code, status=status):
            return error(code, str(exc), status)

    for exc_type, code, status in ERROR_MAP:
        _register(exc_type, code, status)

    # -- datasets ---------------------------------------------------------------

    @app.get("/datasets")
    def list_datasets():
        payload = [
            {
                "dataset_id": dataset.dataset_id,
                "title": dataset.title,
                "item_count": len(dataset),
                "category_count": len(dataset.categories),
            }
            for dataset in store.datasets().values()
        ]
        return ok(payload)

    @app.get("/datasets/{dataset_id}")
    def get_dataset(dataset_id: str):
        try:
            dataset = store.get_dataset(dataset_id)
        except StoreError as exc:
            raise ApiError("not_found", str(exc), 404) from exc
        return ok(corpus.export_dataset(dataset))

    @app.post("/datasets")
    def upload_dataset(document: dict = Body(...)):
        dataset = corpus.parse_dataset(document)
        try:
            store.save_dataset(dataset)
        except StoreError as exc:
            raise ApiError("conflict", str(exc), 409) from exc
        return ok(
            {"dataset_id": dataset.dataset_id, "item_count": len(dataset)},
            status_code=201,
        )

    # -- tree ---------------------------------------------------------------------

    @app.get("/tree")
    def get_tree():
        tree = store.tree()
        document = tree.to_document()
        document["fingerprint"] = tree.fingerprint
        return ok(document)

    # -- sessions ---------------------------------------------------------------

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        try:
            dataset = store.get_dataset(body.dataset_id)
        except StoreError as exc:
            raise ApiError("not_found", str(exc), 404) from exc
        session = Session.create(dataset, store.tree(), body.coder_id)
        with registry_lock:
            store.save_new_session(session)
            sessions[session.session_id] = session
            locks[session.session_id] = threading.Lock()
        return ok(_session_summary(session), status_code=201)

    @app.get("/sessions")
    def list_sessions():
        with registry_lock:
            listed = sorted(sessions.values(), key=lambda s: (s.created_at, s.session_id))
            return ok([_session_summary(s) for s in listed])

    @app.get("/sessions/{session_id}")
    def get_session_detail(session_id: str):
        session, lock = get_session(session_id)
        with lock:
            payload = _session_summary(session)
            payload["decisions"] = [
                _decision_payload(session, item_id) for item_id in sorted(session.decisions)
            ]
            payload["in_progress"] = {
                item_id: [{"question": s.question, "answer": s.answer} for s in steps]
                for item_id, steps in sorted(session.in_progress.items())
            }
            payload["data_model"] = session.data_model()
            return ok(payload)

    @app.get("/sessions/{session_id}/next")
    def next_item(session_id: str):
        session, lock = get_session(session_id)
        with lock:
            item_id = session.next_pending()
            if item_id is None:
                return ok({"item": None, "progress": _progress_doc(session)})
            item = session.dataset.item(item_id)
            question = session.current_question(item_id)
            steps = session.path_of(item_id)
            return ok(
                {
                    "item": {
                        "item_id": item.item_id,
                        "category_id": item.category_id,
                        "text": item.text,
                        "notes": item.notes,
                    },
                    "question": _question_doc(question),
                    "breadcrumb": [
                        {
                            "question": s.question,
                            "answer": s.answer,
                            "text": session.tree.question(s.question).text,
                        }
                        for s in steps
                    ],
                    "progress": _progress_doc(session),
                    "undoable": bool(steps),
                }
            )

    @app.post("/sessions/{session_id}/items/{item_id}/answer")
    def answer_item(session_id: str, item_id: str, body: AnswerBody):
        session, lock = get_session(session_id)
        with lock:
            outcome = session.answer(item_id, body.answer)
            store.append_events(session)
            undo_tokens.get(session_id, {}).pop(item_id, None)
            if isinstance(outcome, Question):
                payload = {
                    "outcome": "question",
                    "question": _question_doc(outcome),
                    "progress": _progress_doc(session),
                }
            else:
                payload = {
                    "outcome": "decision",
                    "decision": _decision_payload(session, item_id),
                    "progress": _progress_doc(session),
                }
            return ok(payload)

    @app.post("/sessions/{session_id}/items/{item_id}/undo")
    def undo_item(session_id: str, item_id: str, body: Optional[UndoBody] = None):
        session, lock = get_session(session_id)
        token = body.token if body else None
        with lock:
            if token is not None:
                cached = undo_tokens.get(session_id, {}).get(item_id)
                if cached and cached[0] == token:
                    return ok(cached[1])
            question = session.undo(item_id)
            store.append_events(session)
            payload = {
                "item_id": item_id,
                "question": _question_doc(question),
                "path": [
                    {"question": s.question, "answer": s.answer}
                    for s in session.path_of(item_id)
                ],
                "progress": _progress_doc(session),
            }
            if token is not None:
                undo_tokens.setdefault(session_id, {})[item_id] = (token, payload)
            return ok(payload)

    @app.put("/sessions/{session_id}/items/{item_id}/tags")
    def set_tags(session_id: str, item_id: str, body: TagsBody):
        session, lock = get_session(session_id)
        with lock:
            session.set_supplementary_tags(item_id, body.tags)
            store.append_events(session)
            return ok(_decision_payload(session, item_id))

    # -- analytics ----------------------------------------------------------------

    def _emit(report, format: str):
        if format == "json":
            return ok(report.to_document())
        rendered = analytics.emit_report(report, format)
        if format in ("chart", "chart-data"):
            import json as json_module

            return ok(json_module.loads(rendered))
        return ok({"format": format, "content": rendered})

    @app.get("/sessions/{session_id}/report")
    def session_report(session_id: str, format: str = "json"):
        session, lock = get_session(session_id)
        with lock:
            report = analytics.frequency_table(session)
        return _emit(report, format)

    @app.get("/sessions/{session_id}/flow")
    def session_flow(session_id: str, mode: str = "inferred-from-codes", format: str = "json"):
        session, lock = get_session(session_id)
        with lock:
            stats = analytics.question_flow_stats(session, mode)
        return _emit(stats, format)

    @app.get("/compare")
    def compare_sessions(sessions: str = "", format: str = "json"):
        ids = [part for part in sessions.split(",") if part]
        if not ids:
            raise ApiError("validation", "query parameter 'sessions' is required", 400)
        selected = []
        for session_id in ids:
            session, _ = get_session(session_id)
            selected.append(session)
        matrix = analytics.compare(selected)
        return _emit(matrix, format)

    return app


def serve(host: str = "127.0.0.1", port: int = 8764, data_dir: str = ".") -> None:
    """Run the service until interrupted (used by the CLI 'serve' command)."""
    import uvicorn

    store = DataStore(data_dir)
    app = create_app(store)
    uvicorn.run(app, host=host, port=port, log_level="info")
