"""Command-line entry point: ingest, validate, code, replay, report, serve.

Exit codes: 0 success, 1 operational error, 2 usage error. Report output is
byte-deterministic for identical inputs (no timestamps).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analytics, corpus
from .analytics import AnalyticsError
from .corpus import CorpusError
from .session import Session, SessionError
from .store import DataStore, StoreError
from .tree import TreeError, load_tree

DATA_DIR_ENV = "SACODING_DATA_DIR"

OPERATIONAL_ERRORS = (
    AnalyticsError,
    CorpusError,
    SessionError,
    StoreError,
    TreeError,
    OSError,
    json.JSONDecodeError,
)


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".sacoding"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sacoding",
        description="Code security-advice datasets with the SAcoding decision tree.",
    )
    parser.add_argument(
        "--data-dir",
        type=Path,
        default=None,
        help=f"data directory (default: ${DATA_DIR_ENV} or ~/.sacoding)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset file and add it to the data directory")
    p.add_argument("file", type=Path)

    p = sub.add_parser("validate-tree", help="check a tree-definition file")
    p.add_argument("file", type=Path)

    p = sub.add_parser("datasets", help="list known datasets")

    p = sub.add_parser("code", help="interactive terminal coding loop")
    p.add_argument("dataset", help="dataset id, alias, or file path")
    p.add_argument("--coder", required=True, help="coder identifier")
    p.add_argument("--session", default=None, help="session id to create or resume")

    p = sub.add_parser("replay", help="import recorded final codes as a pathless session")
    p.add_argument("dataset", help="dataset id, alias, or file path")
    p.add_argument("codes", help="codes file path or bundled alias (e.g. appendix-etsi-codes)")
    p.add_argument("--coder", default=None, help="override the coder id in the codes file")
    p.add_argument("--session", default=None, help="session id (default: <dataset>-<coder>-replay)")

    p = sub.add_parser("report", help="frequency report for a session")
    p.add_argument("session")
    p.add_argument("--format", default="table", choices=["table", "csv", "json", "chart"])
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("flow", help="question-flow statistics for a session")
    p.add_argument("session")
    p.add_argument("--mode", default="inferred-from-codes",
                   choices=["inferred-from-codes", "inferred", "recorded-paths", "recorded"])
    p.add_argument("--format", default="table", choices=["table", "csv", "json", "chart"])
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("compare", help="compare code proportions across sessions")
    p.add_argument("sessions", nargs="+")
    p.add_argument("--format", default="table", choices=["table", "csv", "json", "chart"])
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("export", help="export a session (json checkpoint or csv decisions)")
    p.add_argument("session")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("serve", help="run the local HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8764)

    return parser


def _write_output(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        out.write_text(text, encoding="utf-8")


def cmd_ingest(store: DataStore, args) -> int:
    dataset = corpus.parse_dataset(args.file)
    path = store.save_dataset(dataset)
    print(
        f"ingested {dataset.dataset_id!r}: {len(dataset)} items, "
        f"{len(dataset.categories)} categories -> {path}"
    )
    return 0


def cmd_validate_tree(args) -> int:
    tree = load_tree(args.file)
    print(
        f"OK: {len(tree.questions)} questions, {len(tree.leaves)} leaf codes, "
        f"{len(tree.enumerate_paths())} paths, fingerprint {tree.fingerprint[:12]}"
    )
    return 0


def cmd_datasets(store: DataStore, args) -> int:
    for dataset in store.datasets().values():
        print(f"{dataset.dataset_id}\t{len(dataset)} items\t{dataset.title}")
    return 0


def cmd_replay(store: DataStore, args) -> int:
    dataset = store.get_dataset(args.dataset)
    codes = store.get_codes(args.codes)
    if codes.dataset_id and codes.dataset_id != dataset.dataset_id:
        raise StoreError(
            f"codes file is for dataset {codes.dataset_id!r}, not {dataset.dataset_id!r}"
        )
    coder = args.coder or codes.coder_id
    session_id = args.session or f"{dataset.dataset_id}-{coder}-replay"
    session = Session.import_recorded_codes(
        dataset, store.tree(), codes.assignments, coder_id=coder, session_id=session_id
    )
    for item_id, tags in codes.tags.items():
        session.set_supplementary_tags(item_id, tags)
    store.save_new_session(session, overwrite=True)
    coded, total = session.progress()
    print(f"session {session.session_id}: {coded}/{total} decisions imported")
    return 0


def _load_session(store: DataStore, ref: str) -> Session:
    return store.load_session(ref)


def cmd_report(store: DataStore, args) -> int:
    session = _load_session(store, args.session)
    report = analytics.frequency_table(session)
    _write_output(analytics.emit_report(report, args.format), args.out)
    return 0


def cmd_flow(store: DataStore, args) -> int:
    session = _load_session(store, args.session)
    stats = analytics.question_flow_stats(session, args.mode)
    _write_output(analytics.emit_report(stats, args.format), args.out)
    return 0


def cmd_compare(store: DataStore, args) -> int:
    sessions = [_load_session(store, ref) for ref in args.sessions]
    matrix = analytics.compare(sessions)
    _write_output(analytics.emit_report(matrix, args.format), args.out)
    return 0


def cmd_export(store: DataStore, args) -> int:
    session = _load_session(store, args.session)
    if args.format == "json":
        text = json.dumps(session.checkpoint(), indent=2, ensure_ascii=False) + "\n"
    else:
        import csv as csv_module
        import io

        buffer = io.StringIO()
        writer = csv_module.writer(buffer, lineterminator="\n")
        writer.writerow(["item_id", "code", "pathless", "tags"])
        for item_id in sorted(session.decisions):
            decision = session.decisions[item_id]
            writer.writerow(
                [
                    item_id,
                    decision.code.id,
                    "true" if decision.pathless else "false",
                    ";".join(sorted(decision.supplementary_tags)),
                ]
            )
        text = buffer.getvalue()
    _write_output(text, args.out)
    return 0


def cmd_serve(store: DataStore, args) -> int:
    from .service import create_app
    import uvicorn

    app = create_app(store)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# -- interactive terminal coding ---------------------------------------------

CODE_PROMPT = "[y]es  [n]o  [u]ndo  [t]ag <tags>  [s]kip  [q]uit > "


def cmd_code(store: DataStore, args, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    def say(text: str = "") -> None:
        print(text, file=stdout)

    dataset = store.get_dataset(args.dataset)
    tree = store.tree()
    if args.session and store.has_session(args.session):
        session = store.load_session(args.session)
        if session.dataset_id != dataset.dataset_id:
            raise StoreError(
                f"session {args.session!r} is for dataset {session.dataset_id!r}"
            )
        say(f"resuming session {session.session_id}")
    else:
        session = Session.create(dataset, tree, args.coder, session_id=args.session)
        store.save_new_session(session)
        say(f"created session {session.session_id}")

    skipped: list[str] = []
    last_finalized: Optional[str] = None
    while True:
        pending = [i for i in session.pending_items() if i not in skipped]
        if not pending:
            if skipped and session.pending_items():
                skipped = []  # cycle back to skipped items
                continue
            break
        item_id = pending[0]
        item = session.dataset.item(item_id)
        question = session.current_question(item_id)
        coded, total = session.progress()
        say("")
        say(f"--- {item.item_id} [{item.category_id}]  ({coded}/{total} coded) ---")
        say(item.text)
        say(f"{question.id}: {question.text}")
        if stdin is sys.stdin:
            try:
                stdout.flush()
                raw = input(CODE_PROMPT)
            except EOFError:
                break
        else:
            raw = stdin.readline()
            if raw == "":
                say("input exhausted; stopping")
                break
        stripped = raw.strip()
        command = stripped.lower()
        if not command:
            continue
        if command in ("q", "quit"):
            break
        if command in ("s", "skip"):
            skipped.append(item_id)
            continue
        if command in ("u", "undo"):
            target = item_id if session.path_of(item_id) else last_finalized
            if target is None:
                say("nothing to undo")
                continue
            try:
                question = session.undo(target)
            except SessionError as exc:
                say(f"cannot undo: {exc}")
                continue
            store.append_events(session)
            say(f"undid last answer on {target}; back at {question.id}")
            last_finalized = None
            continue
        if command.startswith("t"):
            target = last_finalized
            if target is None:
                say("no finalized item to tag; answer an item first")
                continue
            tags = stripped[1:].replace(",", " ").split()
            try:
                decision = session.set_supplementary_tags(target, tags)
            except SessionError as exc:
                say(f"cannot tag: {exc}")
                continue
            store.append_events(session)
            say(f"{target} tags: {sorted(decision.supplementary_tags) or '(none)'}")
            continue
        if command in ("y", "yes", "n", "no"):
            answer = "yes" if command.startswith("y") else "no"
            outcome = session.answer(item_id, answer)
            store.append_events(session)
            if hasattr(outcome, "code"):
                code = outcome.code
                star = "*" if code.actionable else ""
                say(f"=> {item.item_id} coded {star}{code.id} ({code.label})")
                last_finalized = item_id
            continue
        say("unrecognized input; use y / n / u / t <tags> / s / q")

    coded, total = session.progress()
    say("")
    say(f"session {session.session_id}: {coded}/{total} items coded")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    data_dir = args.data_dir or default_data_dir()
    try:
        if args.command == "validate-tree":
            return cmd_validate_tree(args)
        store = DataStore(data_dir)
        handlers = {
            "ingest": cmd_ingest,
            "datasets": cmd_datasets,
            "code": cmd_code,
            "replay": cmd_replay,
            "report": cmd_report,
            "flow": cmd_flow,
            "compare": cmd_compare,
            "export": cmd_export,
            "serve": cmd_serve,
        }
        return handlers[args.command](store, args)
    except OPERATIONAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
