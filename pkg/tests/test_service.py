import json

import pytest
from fastapi.testclient import TestClient

from sacoding.corpus import bundled_codes, bundled_dataset, export_dataset
from sacoding.service import create_app
from sacoding.session import Session
from sacoding.store import DataStore
from sacoding.tree import default_tree

from conftest import tiny_dataset


@pytest.fixture()
def store(tmp_path):
    return DataStore(tmp_path / "data")


@pytest.fixture()
def client(store):
    return TestClient(create_app(store))


def seed_replays(store):
    tree = store.tree()
    ids = []
    for dataset_id in ("dcms-full", "dcms-subtopics", "etsi-provisions"):
        codes = bundled_codes(dataset_id)
        session = Session.import_recorded_codes(
            bundled_dataset(dataset_id),
            tree,
            codes.assignments,
            coder_id=codes.coder_id,
            session_id=f"{dataset_id}-replay",
        )
        store.save_new_session(session)
        ids.append(session.session_id)
    return ids


def payload(response, expected_status=200):
    assert response.status_code == expected_status, response.text
    body = response.json()
    assert body["status"] == "ok"
    assert "error" not in body
    return body["payload"]


def error_body(response, expected_status):
    assert response.status_code == expected_status, response.text
    body = response.json()
    assert body["status"] == "error"
    assert "payload" not in body
    return body["error"]


def test_list_datasets(client):
    datasets = payload(client.get("/datasets"))
    sizes = {d["dataset_id"]: d["item_count"] for d in datasets}
    assert sizes == {"dcms-full": 13, "dcms-subtopics": 28, "etsi-provisions": 67}


def test_get_dataset_document(client):
    document = payload(client.get("/datasets/etsi-provisions"))
    assert document["dataset_id"] == "etsi-provisions"
    assert len(document["items"]) == 67
    assert error_body(client.get("/datasets/nope"), 404)["code"] == "not_found"


def test_upload_dataset_and_conflict(client):
    document = export_dataset(tiny_dataset(3, dataset_id="uploaded"))
    created = payload(client.post("/datasets", json=document), 201)
    assert created == {"dataset_id": "uploaded", "item_count": 3}
    assert error_body(client.post("/datasets", json=document), 409)["code"] == "conflict"
    listed = payload(client.get("/datasets"))
    assert "uploaded" in {d["dataset_id"] for d in listed}


def test_upload_invalid_dataset(client):
    document = export_dataset(tiny_dataset(2, dataset_id="bad"))
    document["items"].append(dict(document["items"][0]))  # duplicate item id
    assert error_body(client.post("/datasets", json=document), 400)["code"] == "bad_dataset"


def test_tree_endpoint(client):
    tree_doc = payload(client.get("/tree"))
    assert len(tree_doc["questions"]) == 11
    assert len(tree_doc["leaves"]) == 12
    assert tree_doc["fingerprint"] == default_tree().fingerprint
    actionable = {l["id"] for l in tree_doc["leaves"] if l["actionable"]}
    assert actionable == {"P3", "P4", "P5", "P6"}


def test_full_coding_flow(client):
    created = payload(client.post("/sessions", json={"dataset_id": "etsi-provisions", "coder_id": "c1"}), 201)
    sid = created["session_id"]
    assert created["progress"] == {"coded": 0, "total": 67}

    nxt = payload(client.get(f"/sessions/{sid}/next"))
    assert nxt["item"]["item_id"] == "ETSI-1-1"
    assert nxt["question"]["id"] == "Q1"
    assert nxt["breadcrumb"] == []
    assert nxt["undoable"] is False

    out = payload(client.post(f"/sessions/{sid}/items/ETSI-1-1/answer", json={"answer": "no"}))
    assert out["outcome"] == "decision"
    assert out["decision"]["code"]["id"] == "M1"
    assert out["decision"]["code"]["label"].startswith("Not Useful")
    assert out["progress"] == {"coded": 1, "total": 67}

    tagged = payload(
        client.put(f"/sessions/{sid}/items/ETSI-1-1/tags", json={"tags": ["Unfocused"]})
    )
    assert tagged["tags"] == ["Unfocused"]

    out = payload(client.post(f"/sessions/{sid}/items/ETSI-1-2/answer", json={"answer": "yes"}))
    assert out["outcome"] == "question"
    assert out["question"]["id"] == "Q2"

    nxt = payload(client.get(f"/sessions/{sid}/next"))
    assert nxt["item"]["item_id"] == "ETSI-1-2"
    assert nxt["question"]["id"] == "Q2"
    assert [b["question"] for b in nxt["breadcrumb"]] == ["Q1"]
    assert nxt["undoable"] is True


def test_invalid_answer_leaves_state_unchanged(client):
    sid = payload(client.post("/sessions", json={"dataset_id": "etsi-provisions", "coder_id": "c"}), 201)[
        "session_id"
    ]
    err = error_body(client.post(f"/sessions/{sid}/items/ETSI-1-1/answer", json={"answer": "maybe"}), 400)
    assert err["code"] == "validation"
    detail = payload(client.get(f"/sessions/{sid}"))
    assert detail["progress"]["coded"] == 0
    assert detail["in_progress"] == {}


def test_answer_on_finalized_conflicts(client):
    sid = payload(client.post("/sessions", json={"dataset_id": "etsi-provisions", "coder_id": "c"}), 201)[
        "session_id"
    ]
    client.post(f"/sessions/{sid}/items/ETSI-1-1/answer", json={"answer": "no"})
    err = error_body(client.post(f"/sessions/{sid}/items/ETSI-1-1/answer", json={"answer": "no"}), 409)
    assert err["code"] == "already_finalized"


def test_tag_rule_violation(client):
    sid = payload(client.post("/sessions", json={"dataset_id": "etsi-provisions", "coder_id": "c"}), 201)[
        "session_id"
    ]
    for answer in ("yes", "yes", "no", "yes", "yes", "yes", "no", "no"):
        client.post(f"/sessions/{sid}/items/ETSI-1-1/answer", json={"answer": answer})
    err = error_body(
        client.put(f"/sessions/{sid}/items/ETSI-1-1/tags", json={"tags": ["Unfocused"]}), 409
    )
    assert err["code"] == "tag_rule"


def test_undo_idempotency_token(client):
    sid = payload(client.post("/sessions", json={"dataset_id": "etsi-provisions", "coder_id": "c"}), 201)[
        "session_id"
    ]
    client.post(f"/sessions/{sid}/items/ETSI-1-1/answer", json={"answer": "yes"})
    client.post(f"/sessions/{sid}/items/ETSI-1-1/answer", json={"answer": "yes"})

    first = payload(client.post(f"/sessions/{sid}/items/ETSI-1-1/undo", json={"token": "t-1"}))
    assert [s["question"] for s in first["path"]] == ["Q1"]
    repeat = payload(client.post(f"/sessions/{sid}/items/ETSI-1-1/undo", json={"token": "t-1"}))
    assert repeat == first  # no double rewind
    detail = payload(client.get(f"/sessions/{sid}"))
    assert [s["question"] for s in detail["in_progress"]["ETSI-1-1"]] == ["Q1"]

    fresh = payload(client.post(f"/sessions/{sid}/items/ETSI-1-1/undo", json={"token": "t-2"}))
    assert fresh["path"] == []


def test_undo_nothing_conflicts(client):
    sid = payload(client.post("/sessions", json={"dataset_id": "etsi-provisions", "coder_id": "c"}), 201)[
        "session_id"
    ]
    err = error_body(client.post(f"/sessions/{sid}/items/ETSI-1-1/undo", json={}), 409)
    assert err["code"] == "nothing_to_undo"


def test_unknown_session_and_item(client):
    assert error_body(client.get("/sessions/ghost"), 404)["code"] == "not_found"
    sid = payload(client.post("/sessions", json={"dataset_id": "dcms-full", "coder_id": "c"}), 201)[
        "session_id"
    ]
    err = error_body(client.post(f"/sessions/{sid}/items/ghost/answer", json={"answer": "yes"}), 404)
    assert err["code"] == "unknown_item"


def test_create_session_unknown_dataset(client):
    assert error_body(
        client.post("/sessions", json={"dataset_id": "ghost", "coder_id": "c"}), 404
    )["code"] == "not_found"


def test_report_endpoint(store):
    seed_replays(store)
    client = TestClient(create_app(store))
    report = payload(client.get("/sessions/etsi-provisions-replay/report"))
    assert report["totals"] == {"P1": 23, "P2": 7, "P4": 1, "P5": 28, "T": 5, "N1.1": 2, "M1": 1}
    assert report["actionable_display"] == "43.3%"

    table = payload(client.get("/sessions/etsi-provisions-replay/report?format=table"))
    assert "Total (67)" in table["content"]

    chart = payload(client.get("/sessions/etsi-provisions-replay/report?format=chart"))
    assert chart["kind"] == "grouped-bar"


def test_compare_endpoint(store):
    ids = seed_replays(store)
    client = TestClient(create_app(store))
    matrix = payload(client.get("/compare?sessions=" + ",".join(ids)))
    assert matrix["rows"][-1] == "Actionable"
    by_label = {c["label"]: c for c in matrix["columns"]}
    assert by_label["ETSI Provisions"]["display"]["Actionable"] == "43.3%"
    assert by_label["DCMS Full Guidelines"]["display"]["Actionable"] == "7.7%"
    assert by_label["DCMS Sub-Topics Guidelines"]["display"]["Actionable"] == "25.0%"
    for column in matrix["columns"]:
        for code in ("M2", "P3", "P6"):
            assert column["counts"][code] == 0

    err = error_body(client.get("/compare"), 400)
    assert err["code"] == "validation"


def test_flow_endpoint(store):
    seed_replays(store)
    client = TestClient(create_app(store))
    stats = payload(client.get("/sessions/etsi-provisions-replay/flow"))
    q4 = next(q for q in stats["questions"] if q["id"] == "Q4")
    assert q4["yes"] == 52
    assert q4["yes_pct_of_coded"] == "77.6%"
    err = error_body(
        client.get("/sessions/etsi-provisions-replay/flow?mode=recorded-paths"), 409
    )
    assert err["code"] == "mode_unavailable"


def test_read_endpoints_do_not_mutate(store):
    seed_replays(store)
    client = TestClient(create_app(store))
    before = payload(client.get("/sessions/etsi-provisions-replay"))
    client.get("/sessions/etsi-provisions-replay/report")
    client.get("/sessions/etsi-provisions-replay/next")
    client.get("/compare?sessions=etsi-provisions-replay")
    after = payload(client.get("/sessions/etsi-provisions-replay"))
    assert before == after


def test_state_survives_restart(tmp_path):
    data_dir = tmp_path / "data"
    store = DataStore(data_dir)
    client = TestClient(create_app(store))
    sid = payload(client.post("/sessions", json={"dataset_id": "dcms-full", "coder_id": "c"}), 201)[
        "session_id"
    ]
    client.post(f"/sessions/{sid}/items/DCMS-1/answer", json={"answer": "no"})
    client.put(f"/sessions/{sid}/items/DCMS-1/tags", json={"tags": ["Unfocused"]})
    client.post(f"/sessions/{sid}/items/DCMS-2/answer", json={"answer": "yes"})
    before = payload(client.get(f"/sessions/{sid}"))["data_model"]

    reborn = TestClient(create_app(DataStore(data_dir)))
    after = payload(reborn.get(f"/sessions/{sid}"))["data_model"]
    assert json.dumps(after, sort_keys=True) == json.dumps(before, sort_keys=True)
