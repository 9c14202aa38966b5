import json

import pytest
from fastapi.testclient import TestClient

from blockadvice.service import (
    MAX_OOV_FRACTION,
    ReplayError,
    ServiceConfig,
    ServiceState,
    create_app,
    replay_event_log,
)


def _config(service_env, **kw):
    return ServiceConfig(
        models_dir=service_env["models"], dataset_path=service_env["data"], **kw
    )


@pytest.fixture()
def client(service_env):
    return TestClient(create_app(_config(service_env)))


def _create(client, protocol, **body):
    r = client.post("/v1/sessions", json={"protocol": protocol, **body})
    assert r.status_code == 200, r.text
    return r.json()


# ---------------------------------------------------------------------------
# session creation


def test_create_baseline_session(client):
    body = _create(client, "baseline")
    assert body["phase"] == "done"
    assert body["expected_events"] == []
    assert len(body["history"]) == 1
    assert body["prediction"]["source"] is not None
    assert body["board"] == body["example"]["world"]


def test_create_restrictive_session(client):
    body = _create(client, "restrictive")
    assert body["phase"] == "awaiting_feedback"
    assert body["expected_events"] == ["restrictive_advice", "accept"]


def test_create_with_example_id(client, toy_dataset):
    ex = toy_dataset.split("train")[3]
    body = _create(client, "baseline", example_id=ex.id)
    assert body["example"]["id"] == ex.id


def test_unknown_protocol(client):
    r = client.post("/v1/sessions", json={"protocol": "psychic"})
    assert r.status_code == 422
    body = r.json()
    assert body["code"] == "invalid_request"
    assert "baseline" in body["expected"]


def test_unknown_example(client):
    r = client.post("/v1/sessions", json={"protocol": "baseline", "example_id": "xx"})
    assert r.status_code == 404
    assert r.json()["code"] == "not_found"


def test_unknown_model_override(client):
    r = client.post(
        "/v1/sessions", json={"protocol": "baseline", "models": {"predictor": "ghost"}}
    )
    assert r.status_code == 404


def test_missing_protocol_field(client):
    r = client.post("/v1/sessions", json={})
    assert r.status_code == 422
    assert r.json()["code"] == "invalid_request"


def test_random_example_is_seeded(service_env, toy_dataset):
    test_ids = [ex.id for ex in toy_dataset.split("test")]
    picks = []
    for _ in range(2):
        client = TestClient(create_app(_config(service_env)))
        body = _create(client, "baseline")
        picks.append(body["example"]["id"])
        assert body["example"]["id"] in test_ids
    assert picks[0] == picks[1]  # same seed, same first draw


# ---------------------------------------------------------------------------
# feedback endpoints


def test_advice_roundtrip(client):
    s = _create(client, "restrictive")
    sid = s["session_id"]
    text = "the block is in the top left"
    r = client.post(f"/v1/sessions/{sid}/advice", json={"head": "source", "text": text})
    assert r.status_code == 200
    body = r.json()
    assert body["phase"] == "done"
    assert len(body["history"]) == 2
    assert body["prediction"]["advice_used"]["source"] == text
    assert body["prediction"]["advice_used"]["target"] is None
    # follow-up reads agree with the mutation response
    again = client.get(f"/v1/sessions/{sid}").json()
    assert again == body


def test_corrective_advice(client):
    s = _create(client, "corrective")
    r = client.post(
        f"/v1/sessions/{s['session_id']}/advice",
        json={"head": "target", "text": "move down"},
    )
    assert r.status_code == 200
    assert r.json()["phase"] == "done"


def test_accept_closes_session(client):
    s = _create(client, "restrictive")
    r = client.post(f"/v1/sessions/{s['session_id']}/accept")
    assert r.status_code == 200
    body = r.json()
    assert body["phase"] == "done" and len(body["history"]) == 1


def test_advice_after_done_is_conflict(client):
    s = _create(client, "baseline")
    r = client.post(
        f"/v1/sessions/{s['session_id']}/advice",
        json={"head": "source", "text": "the block is in the top left"},
    )
    assert r.status_code == 409
    body = r.json()
    assert body["code"] == "illegal_event"
    assert body["expected"] == []


def test_legality_beats_tokenization(client):
    # even unreadable text answers 409 when the event itself is illegal
    s = _create(client, "baseline")
    r = client.post(
        f"/v1/sessions/{s['session_id']}/advice",
        json={"head": "source", "text": "zzzz qqqq wwww"},
    )
    assert r.status_code == 409


def test_untokenizable_advice_hint(client):
    assert MAX_OOV_FRACTION == 0.5
    s = _create(client, "restrictive")
    sid = s["session_id"]
    r = client.post(
        f"/v1/sessions/{sid}/advice",
        json={"head": "source", "text": "zzzz qqqq wwww vvvv"},
    )
    assert r.status_code == 422
    body = r.json()
    assert body["code"] == "untokenizable_advice"
    assert "supported phrasings" in body["message"]
    # the failed event must not burn the session
    state = client.get(f"/v1/sessions/{sid}").json()
    assert state["phase"] == "awaiting_feedback"
    r = client.post(
        f"/v1/sessions/{sid}/advice",
        json={"head": "source", "text": "the block is in the top left"},
    )
    assert r.status_code == 200


def test_empty_advice_text(client):
    s = _create(client, "restrictive")
    r = client.post(
        f"/v1/sessions/{s['session_id']}/advice", json={"head": "source", "text": "!!!"}
    )
    assert r.status_code == 422
    assert r.json()["code"] == "untokenizable_advice"


def test_unknown_head(client):
    s = _create(client, "restrictive")
    r = client.post(
        f"/v1/sessions/{s['session_id']}/advice", json={"head": "middle", "text": "x"}
    )
    assert r.status_code == 422
    assert r.json()["expected"] == ["source", "target"]


def test_retry_flow(client):
    s = _create(client, "retry")
    sid = s["session_id"]
    assert s["expected_events"] == ["retry", "accept"]
    r = client.post(f"/v1/sessions/{sid}/retry", json={"head": "source"})
    assert r.status_code == 200
    body = r.json()
    assert body["phase"] == "done" and body["retry_used"]
    assert len(body["history"]) == 2
    r = client.post(f"/v1/sessions/{sid}/retry")
    assert r.status_code == 409


def test_retry_without_body_readvises_all_heads(client):
    s = _create(client, "retry")
    first = s["prediction"]["advice_used"]
    r = client.post(f"/v1/sessions/{s['session_id']}/retry")
    assert r.status_code == 200
    final = r.json()["prediction"]["advice_used"]
    assert final["source"] != first["source"]
    assert final["target"] != first["target"]


def test_retry_on_restrictive_session_is_conflict(client):
    s = _create(client, "restrictive")
    r = client.post(f"/v1/sessions/{s['session_id']}/retry")
    assert r.status_code == 409
    assert r.json()["expected"] == ["restrictive_advice", "accept"]


def test_unknown_session_404(client):
    assert client.get("/v1/sessions/deadbeef").status_code == 404
    assert client.post("/v1/sessions/deadbeef/accept").status_code == 404


# ---------------------------------------------------------------------------
# oracle debug view


def test_oracle_view_is_read_only(client):
    s = _create(client, "restrictive")
    sid = s["session_id"]
    before = client.get(f"/v1/sessions/{sid}").json()
    r = client.get(f"/v1/sessions/{sid}/oracle")
    assert r.status_code == 200
    body = r.json()
    assert len(body["gold_source"]) == 3
    assert set(body["errors"]) == {"source", "target"}
    assert body["advice"] is not None
    assert body["advice"]["kind"] in ("restrictive_advice", "accept")
    # repeated views agree and never mutate the session
    assert client.get(f"/v1/sessions/{sid}/oracle").json() == body
    assert client.get(f"/v1/sessions/{sid}").json() == before


def test_oracle_view_on_selfgen_has_no_advice(client):
    s = _create(client, "selfgen_union")
    body = client.get(f"/v1/sessions/{s['session_id']}/oracle").json()
    assert body["advice"] is None


# ---------------------------------------------------------------------------
# catalog endpoints


def test_models_endpoint(client):
    body = client.get("/v1/models").json()
    ids = {m["id"]: m["architecture"] for m in body["models"]}
    assert "baseline" in ids and ids["baseline"].startswith("e2e.")


def test_example_endpoint(client, toy_dataset):
    ex = toy_dataset.split("dev")[0]
    body = client.get(f"/v1/examples/{ex.id}").json()
    assert body["split"] == "dev"
    assert body["example"]["instruction"] == ex.instruction
    assert client.get("/v1/examples/none-such").status_code == 404


# ---------------------------------------------------------------------------
# idempotency


def test_idempotent_session_creation(client):
    headers = {"Idempotency-Key": "abc"}
    a = client.post("/v1/sessions", json={"protocol": "baseline"}, headers=headers)
    b = client.post("/v1/sessions", json={"protocol": "baseline"}, headers=headers)
    assert a.json() == b.json()
    c = client.post("/v1/sessions", json={"protocol": "baseline"})
    assert c.json()["session_id"] != a.json()["session_id"]


def test_idempotent_advice_replay(client):
    s = _create(client, "restrictive")
    sid = s["session_id"]
    headers = {"Idempotency-Key": "once"}
    payload = {"head": "source", "text": "the block is in the top left"}
    a = client.post(f"/v1/sessions/{sid}/advice", json=payload, headers=headers)
    b = client.post(f"/v1/sessions/{sid}/advice", json=payload, headers=headers)
    assert a.status_code == b.status_code == 200
    assert a.json() == b.json()
    assert len(client.get(f"/v1/sessions/{sid}").json()["history"]) == 2


# ---------------------------------------------------------------------------
# event log and replay


def _drive_sessions(client):
    s = _create(client, "restrictive")
    client.post(
        f"/v1/sessions/{s['session_id']}/advice",
        json={"head": "target", "text": "the target is in the lower right"},
    )
    s = _create(client, "retry")
    client.post(f"/v1/sessions/{s['session_id']}/retry", json={"head": "target"})
    s = _create(client, "corrective")
    client.post(f"/v1/sessions/{s['session_id']}/accept")
    _create(client, "selfgen_input_specific")


def test_event_log_replay(service_env, tmp_path):
    log_path = tmp_path / "events.jsonl"
    config = _config(service_env, log_path=log_path)
    client = TestClient(create_app(config))
    _drive_sessions(client)

    entries = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert [e["seq"] for e in entries] == list(range(1, len(entries) + 1))
    assert entries[0]["action"]["type"] == "create"
    assert all("state" in e for e in entries)

    fresh = ServiceState(_config(service_env))
    sessions = replay_event_log(log_path, fresh)
    assert set(sessions) == {e["action"]["session_id"] for e in entries}
    for sid, session in sessions.items():
        live = client.get(f"/v1/sessions/{sid}").json()
        replayed = session.to_json()
        assert json.dumps(replayed, sort_keys=True) == json.dumps(
            {k: live[k] for k in replayed}, sort_keys=True
        )


def test_replay_detects_tampering(service_env, tmp_path):
    log_path = tmp_path / "events.jsonl"
    client = TestClient(create_app(_config(service_env, log_path=log_path)))
    s = _create(client, "retry")
    client.post(f"/v1/sessions/{s['session_id']}/retry")

    lines = log_path.read_text().splitlines()
    doctored = json.loads(lines[-1])
    doctored["state"]["retry_used"] = False
    lines[-1] = json.dumps(doctored, sort_keys=True)
    log_path.write_text("\n".join(lines) + "\n")

    with pytest.raises(ReplayError):
        replay_event_log(log_path, ServiceState(_config(service_env)))


# ---------------------------------------------------------------------------
# static frontend mount


def test_static_mount(service_env, tmp_path):
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<h1>advice console</h1>")
    client = TestClient(create_app(_config(service_env, static_dir=static)))
    r = client.get("/")
    assert r.status_code == 200 and "advice console" in r.text
    # API routes still win over the mount
    assert client.get("/v1/models").status_code == 200
