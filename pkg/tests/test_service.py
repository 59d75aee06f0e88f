import json
import threading

import pytest
from fastapi.testclient import TestClient

from conftest import FIXTURES
from vsminsight.llm import (
    ChatBackend,
    ChatResponse,
    FINISH_STOP,
    ScriptEntry,
    ScriptedBackend,
    TokenUsage,
    estimate_tokens,
)
from vsminsight.service import create_app

QUESTION = "Are any supermarkets under supplied?"


def tool_env(tool, **arguments):
    return json.dumps({"action": "tool", "tool": tool, "arguments": arguments})


def final_env(text):
    return json.dumps({"action": "final_answer", "text": text})


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text("utf-8"))


def load_simulation(context):
    return json.loads((FIXTURES / "contexts" / context / "simulation.json").read_text("utf-8"))


def fig2_provider():
    return ScriptedBackend.from_file(FIXTURES / "fig2_script.json"), None


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "store", backend_provider=fig2_provider)
    with TestClient(app) as c:
        c.store_dir = tmp_path / "store"
        yield c


def upload_supermarket(client):
    resp = client.post("/contexts", json={"vsm": load_fixture("supermarket.json"),
                                          "simulation": load_simulation("supermarket")})
    assert resp.status_code == 201, resp.text
    return resp.json()["context_id"]


def open_session(client, context_id):
    resp = client.post("/sessions", json={"context_id": context_id})
    assert resp.status_code == 201, resp.text
    return resp.json()["session_id"]


# --- health and contexts --------------------------------------------------------


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_upload_fixture_pair_creates_context(client):
    context_id = upload_supermarket(client)
    assert context_id.startswith("ctx_")
    assert client.get("/contexts").json() == {"contexts": [context_id]}


def test_upload_is_idempotent(client):
    first = upload_supermarket(client)
    second = upload_supermarket(client)
    assert first == second
    assert len(client.get("/contexts").json()["contexts"]) == 1


def test_graph_only_upload_runs_simulation(client):
    resp = client.post("/contexts", json={
        "vsm": load_fixture("three_node_line.json"),
        "config": {"horizon_s": 3600, "seed": 7, "sample_interval_s": 60,
                   "start_time": "2025-01-06T08:00:00Z"}})
    assert resp.status_code == 201, resp.text
    context_id = resp.json()["context_id"]
    # same graph and config as the canned fixture, so the stored output and
    # the provenance-derived id must both match a direct pair upload
    stored = (client.store_dir / "contexts" / context_id / "simulation.json").read_bytes()
    canned = (FIXTURES / "contexts" / "line" / "simulation.json").read_bytes()
    assert stored == canned
    pair = client.post("/contexts", json={"vsm": load_fixture("three_node_line.json"),
                                          "simulation": load_simulation("line")})
    assert pair.json()["context_id"] == context_id


def test_illegal_edge_rejected_with_violations(client):
    doc = load_fixture("supermarket.json")
    doc["edges"].append({"from": "C1", "to": "SUP1", "kind": "material",
                         "products": ["P3"], "transfer_time_s": 0,
                         "batch_size_parts": 1})
    resp = client.post("/contexts", json={"vsm": doc, "simulation": load_simulation("supermarket")})
    assert resp.status_code == 400
    body = resp.json()
    assert set(body) == {"error_code", "message", "details"}
    assert body["error_code"] == "validation_error"
    rules = {v["rule"] for v in body["details"]["violations"]}
    assert "EDGE_LEGALITY" in rules


def test_mismatched_simulation_rejected(client):
    resp = client.post("/contexts", json={"vsm": load_fixture("three_node_line.json"),
                                          "simulation": load_simulation("supermarket")})
    assert resp.status_code == 400
    assert resp.json()["error_code"] == "context_mismatch"


@pytest.mark.parametrize("payload", [
    {},
    {"vsm": {"products": ["P1"]}},
    {"vsm": "not an object"},
])
def test_schema_errors_are_422(client, payload):
    if "vsm" in payload:
        payload = dict(payload, simulation=load_simulation("supermarket"))
    resp = client.post("/contexts", json=payload)
    assert resp.status_code == 422
    body = resp.json()
    assert body["error_code"] == "schema_error"
    assert set(body) == {"error_code", "message", "details"}


def test_simulation_and_config_are_mutually_exclusive(client):
    doc = load_fixture("supermarket.json")
    both = client.post("/contexts", json={"vsm": doc,
                                          "simulation": load_simulation("supermarket"),
                                          "config": {"horizon_s": 60}})
    neither = client.post("/contexts", json={"vsm": doc})
    assert both.status_code == 422
    assert neither.status_code == 422


@pytest.mark.parametrize("config", [
    {"horizon_s": 60, "bogus": 1},
    {"seed": 1},
    {"horizon_s": "3600"},
    {"horizon_s": True},
    "short",
])
def test_bad_config_shapes_are_422(client, config):
    resp = client.post("/contexts", json={"vsm": load_fixture("three_node_line.json"),
                                          "config": config})
    assert resp.status_code == 422
    assert resp.json()["error_code"] == "schema_error"


def test_out_of_range_config_is_a_validation_error(client):
    resp = client.post("/contexts", json={"vsm": load_fixture("three_node_line.json"),
                                          "config": {"horizon_s": -5}})
    assert resp.status_code == 400
    rules = {v["rule"] for v in resp.json()["details"]["violations"]}
    assert rules == {"ATTRIBUTE_RANGE"}


def test_non_json_body_keeps_error_shape(client):
    resp = client.post("/contexts", content=b"not json at all",
                       headers={"Content-Type": "application/json"})
    assert resp.status_code == 422
    body = resp.json()
    assert set(body) == {"error_code", "message", "details"}
    assert body["error_code"] == "schema_error"


# --- sessions -------------------------------------------------------------------


def test_create_session_and_fetch_meta(client):
    context_id = upload_supermarket(client)
    session_id = open_session(client, context_id)
    assert session_id.startswith("s_")
    meta = client.get(f"/sessions/{session_id}").json()
    assert meta == {"session_id": session_id, "context_id": context_id, "turns": 0}


def test_session_for_unknown_context_is_404(client):
    resp = client.post("/sessions", json={"context_id": "ctx_ghost"})
    assert resp.status_code == 404
    assert resp.json()["error_code"] == "not_found"


def test_session_body_requires_context_id(client):
    assert client.post("/sessions", json={}).status_code == 422
    assert client.post("/sessions", json={"context_id": 7}).status_code == 422


def test_unknown_session_meta_is_404(client):
    assert client.get("/sessions/s_ghost").status_code == 404


# --- ask and traces -------------------------------------------------------------


def test_ask_replays_scripted_run(client):
    context_id = upload_supermarket(client)
    session_id = open_session(client, context_id)
    resp = client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["turn"] == 1
    assert body["question"] == QUESTION
    assert "minimum of 3 parts" in body["answer"]
    tools = [s["action"]["tool"] for s in body["steps"] if s["action"]["action"] == "tool"]
    assert tools == ["node_discovery", "attribute_extraction",
                     "taxonomy_navigation", "summarize"]
    assert len(body["steps"]) == 5
    assert client.get(f"/sessions/{session_id}").json()["turns"] == 1


def test_trace_round_trips_byte_for_byte(client):
    context_id = upload_supermarket(client)
    session_id = open_session(client, context_id)
    ask = client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
    trace = client.get(f"/sessions/{session_id}/trace/1")
    assert trace.status_code == 200
    stored = (client.store_dir / "sessions" / session_id / "trace_1.json").read_bytes()
    assert trace.content == stored
    assert ask.content == stored


def test_turns_accumulate(client):
    context_id = upload_supermarket(client)
    session_id = open_session(client, context_id)
    for expected in (1, 2):
        resp = client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
        assert resp.json()["turn"] == expected
    assert client.get(f"/sessions/{session_id}").json()["turns"] == 2
    assert client.get(f"/sessions/{session_id}/trace/2").status_code == 200


def test_ask_unknown_session_is_404(client):
    resp = client.post("/sessions/s_ghost/ask", json={"question": "hi"})
    assert resp.status_code == 404


@pytest.mark.parametrize("payload", [{}, {"question": ""}, {"question": "   "}, {"question": 3}])
def test_ask_requires_a_question(client, payload):
    context_id = upload_supermarket(client)
    session_id = open_session(client, context_id)
    resp = client.post(f"/sessions/{session_id}/ask", json=payload)
    assert resp.status_code == 422


def test_trace_out_of_range_is_404(client):
    context_id = upload_supermarket(client)
    session_id = open_session(client, context_id)
    assert client.get(f"/sessions/{session_id}/trace/1").status_code == 404
    client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
    assert client.get(f"/sessions/{session_id}/trace/1").status_code == 200
    assert client.get(f"/sessions/{session_id}/trace/2").status_code == 404
    assert client.get("/sessions/s_ghost/trace/1").status_code == 404


def test_restart_serves_identical_traces(tmp_path):
    store = tmp_path / "store"
    with TestClient(create_app(store, backend_provider=fig2_provider)) as first:
        resp = first.post("/contexts", json={"vsm": load_fixture("supermarket.json"),
                                             "simulation": load_simulation("supermarket")})
        context_id = resp.json()["context_id"]
        session_id = first.post("/sessions", json={"context_id": context_id}).json()["session_id"]
        first.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
        before = first.get(f"/sessions/{session_id}/trace/1").content
        meta_before = first.get(f"/sessions/{session_id}").json()

    with TestClient(create_app(store, backend_provider=fig2_provider)) as second:
        assert second.get(f"/sessions/{session_id}/trace/1").content == before
        assert second.get(f"/sessions/{session_id}").json() == meta_before
        assert second.get("/contexts").json() == {"contexts": [context_id]}


# --- failure paths --------------------------------------------------------------


def test_backend_failure_returns_502_with_partial_trace(tmp_path):
    def provider():
        # one legitimate tool call, then the script runs dry mid-turn
        return ScriptedBackend([ScriptEntry((), tool_env("node_discovery"))]), None

    app = create_app(tmp_path / "store", backend_provider=provider)
    with TestClient(app) as client:
        client.store_dir = tmp_path / "store"
        context_id = upload_supermarket(client)
        session_id = open_session(client, context_id)
        resp = client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
        assert resp.status_code == 502
        body = resp.json()
        assert set(body) == {"error_code", "message", "details"}
        assert body["error_code"] == "backend_error"
        steps = body["details"]["steps"]
        assert len(steps) == 1
        assert steps[0]["action"]["tool"] == "node_discovery"
        # nothing persisted for the failed turn
        assert client.get(f"/sessions/{session_id}").json()["turns"] == 0
        assert client.get(f"/sessions/{session_id}/trace/1").status_code == 404


def test_session_is_usable_after_a_failed_turn(tmp_path):
    calls = []

    def provider():
        calls.append(1)
        if len(calls) == 1:
            return ScriptedBackend([ScriptEntry((), tool_env("node_discovery"))]), None
        return ScriptedBackend.from_file(FIXTURES / "fig2_script.json"), None

    with TestClient(create_app(tmp_path / "store", backend_provider=provider)) as client:
        client.store_dir = tmp_path / "store"
        context_id = upload_supermarket(client)
        session_id = open_session(client, context_id)
        assert client.post(f"/sessions/{session_id}/ask",
                           json={"question": QUESTION}).status_code == 502
        resp = client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
        assert resp.status_code == 200
        assert resp.json()["turn"] == 1


class BlockingBackend(ChatBackend):
    """Stalls the first completion until released; lets a test overlap asks."""

    name = "blocking"

    def __init__(self, started, release, text):
        self.started = started
        self.release = release
        self.text = text

    def complete(self, request):
        self.started.set()
        assert self.release.wait(10)
        return ChatResponse(text=self.text,
                            usage=TokenUsage(estimate_tokens(request.rendered()),
                                             estimate_tokens(self.text)),
                            finish_reason=FINISH_STOP)


def test_concurrent_ask_on_same_session_is_409(tmp_path):
    started = threading.Event()
    release = threading.Event()
    backend = BlockingBackend(started, release, final_env("done"))

    with TestClient(create_app(tmp_path / "store",
                               backend_provider=lambda: (backend, None))) as client:
        client.store_dir = tmp_path / "store"
        context_id = upload_supermarket(client)
        session_id = open_session(client, context_id)

        results = {}

        def slow_ask():
            results["first"] = client.post(f"/sessions/{session_id}/ask",
                                           json={"question": QUESTION})

        worker = threading.Thread(target=slow_ask)
        worker.start()
        assert started.wait(10)
        busy = client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
        assert busy.status_code == 409
        assert busy.json()["error_code"] == "ask_in_progress"
        release.set()
        worker.join(10)
        assert results["first"].status_code == 200
        assert results["first"].json()["answer"] == "done"
        # the lock is released once the turn finishes
        follow_up = client.post(f"/sessions/{session_id}/ask", json={"question": QUESTION})
        assert follow_up.status_code == 200
        assert follow_up.json()["turn"] == 2
