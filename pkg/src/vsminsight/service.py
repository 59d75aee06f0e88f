"""HTTP facade over contexts, ask sessions, and persisted traces.

State lives in an on-disk store of JSON documents, nothing else: restarting
the process against the same directory serves identical traces. Asking is
synchronous (the response carries the final answer and the full step list);
clients that want progress poll the trace endpoint, which 404s until the
turn's file exists. One agent run per session at a time, enforced with an
in-process lock and surfaced as 409.

Every error body has the same shape: {"error_code", "message", "details"}.
"""

from __future__ import annotations

import json
import secrets
import threading
from pathlib import Path
from typing import Callable, Optional

from fastapi import Body, FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from .agent.runtime import AgentConfig, run_orchestrator
from .canon import canonical_json_bytes, fnv1a64_hex
from .catalog import ContextHandle, load_context, save_context
from .errors import (
    ContextMismatch,
    OrchestratorBackendError,
    SchemaError,
    ValidationError,
    VsmInsightError,
    VsmSyntaxError,
)
from .llm import backend_from_env
from .model import parse_vsm
from .sim import SimulationConfig, simulate
from .sim.output import SimulationOutput


class SessionStore:
    """Directory layout: contexts/<id>/{vsm,simulation}.json,
    sessions/<id>.json metadata, sessions/<id>/trace_<turn>.json."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "contexts").mkdir(parents=True, exist_ok=True)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)

    # -- contexts ------------------------------------------------------------

    def create_context(self, vsm_bytes: bytes, output: SimulationOutput) -> str:
        # id derives from provenance, so identical uploads land on the same id
        context_id = "ctx_" + fnv1a64_hex(canonical_json_bytes(output.provenance))
        save_context(self.root / "contexts" / context_id, vsm_bytes, output)
        return context_id

    def context(self, context_id: str) -> ContextHandle:
        directory = self.root / "contexts" / context_id
        if not directory.is_dir():
            raise KeyError(f"no context {context_id!r}")
        return load_context(directory, context_id)

    def list_contexts(self) -> list:
        return sorted(p.name for p in (self.root / "contexts").iterdir() if p.is_dir())

    # -- sessions -------------------------------------------------------------

    def _meta_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.json"

    def _write_meta(self, meta: dict):
        self._meta_path(meta["session_id"]).write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", "utf-8")

    def create_session(self, context_id: str) -> str:
        self.context(context_id)
        session_id = "s_" + secrets.token_hex(6)
        self._write_meta({"session_id": session_id, "context_id": context_id, "turns": 0})
        return session_id

    def session(self, session_id: str) -> dict:
        path = self._meta_path(session_id)
        if not path.exists():
            raise KeyError(f"no session {session_id!r}")
        return json.loads(path.read_text("utf-8"))

    def record_turn(self, session_id: str, question: str, answer) -> int:
        meta = self.session(session_id)
        turn = meta["turns"] + 1
        doc = {"session_id": session_id, "turn": turn, "question": question,
               "answer": answer.text, "steps": [s.to_dict() for s in answer.trace],
               "usage": answer.usage}
        traces = self.root / "sessions" / session_id
        traces.mkdir(exist_ok=True)
        (traces / f"trace_{turn}.json").write_bytes(
            json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False).encode("utf-8")
            + b"\n")
        meta["turns"] = turn
        self._write_meta(meta)
        return turn

    def trace_bytes(self, session_id: str, turn: int) -> bytes:
        self.session(session_id)
        path = self.root / "sessions" / session_id / f"trace_{turn}.json"
        if not path.exists():
            raise KeyError(f"session {session_id!r} has no turn {turn}")
        return path.read_bytes()


class _SessionLocks:
    """Non-blocking per-session mutual exclusion for ask turns."""

    def __init__(self):
        self._guard = threading.Lock()
        self._locks = {}

    def try_acquire(self, session_id: str) -> bool:
        with self._guard:
            lock = self._locks.setdefault(session_id, threading.Lock())
        return lock.acquire(blocking=False)

    def release(self, session_id: str):
        with self._guard:
            self._locks[session_id].release()


def _error(status: int, code: str, message: str, details: Optional[dict] = None):
    return JSONResponse(status_code=status,
                        content={"error_code": code, "message": message,
                                 "details": details or {}})


def env_backend_provider():
    """Orchestrator and subworkflow backends from the environment."""
    return backend_from_env("orchestrator"), backend_from_env("subworkflow")


_CONFIG_FIELDS = {"horizon_s": int, "seed": int, "sample_interval_s": int,
                  "start_time": str}


def _parse_sim_config(obj) -> SimulationConfig:
    if not isinstance(obj, dict):
        raise SchemaError("'config' must be an object")
    unknown = sorted(set(obj) - set(_CONFIG_FIELDS))
    if unknown:
        raise SchemaError(f"unknown config field(s): {unknown}")
    if "horizon_s" not in obj:
        raise SchemaError("config requires 'horizon_s'")
    for key, value in obj.items():
        expected = _CONFIG_FIELDS[key]
        if not isinstance(value, expected) or isinstance(value, bool):
            raise SchemaError(f"config field {key!r} must be {expected.__name__}")
    return SimulationConfig(**obj)


def create_app(store_dir, backend_provider: Optional[Callable] = None,
               cfg: Optional[AgentConfig] = None) -> FastAPI:
    """App over an on-disk store. backend_provider() is called once per ask
    and returns (orchestrator backend, subworkflow backend or None); scripted
    providers hand out a fresh replay each turn."""
    store = SessionStore(store_dir)
    provider = backend_provider or env_backend_provider
    agent_cfg = cfg or AgentConfig()
    locks = _SessionLocks()
    app = FastAPI(title="vsminsight service", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _invalid_request(request, exc):
        # keep the documented error shape even for framework-level rejections
        return _error(422, "schema_error", "request body is not valid JSON",
                      {"errors": [str(e.get("msg", e)) for e in exc.errors()]})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/contexts")
    def list_contexts():
        return {"contexts": store.list_contexts()}

    @app.post("/contexts", status_code=201)
    def create_context(payload: dict = Body(...)):
        if not isinstance(payload, dict) or "vsm" not in payload:
            return _error(422, "schema_error", "body must carry a 'vsm' document")
        extras = set(payload) - {"vsm", "simulation", "config"}
        if extras:
            return _error(422, "schema_error", f"unknown field(s): {sorted(extras)}")
        has_sim = "simulation" in payload
        has_config = "config" in payload
        if has_sim == has_config:
            return _error(422, "schema_error",
                          "provide exactly one of 'simulation' or 'config'")
        try:
            vsm_bytes = json.dumps(payload["vsm"], indent=2, sort_keys=True,
                                   ensure_ascii=False).encode("utf-8")
            graph = parse_vsm(vsm_bytes)
            if has_sim:
                output = SimulationOutput.from_dict(payload["simulation"])
            else:
                output = simulate(graph, _parse_sim_config(payload["config"]))
            handle = ContextHandle("pending", graph, output)
        except ValidationError as exc:
            return _error(400, "validation_error", "graph validation failed",
                          {"violations": [{"rule": v.rule, "subject": v.subject,
                                           "message": v.message}
                                          for v in exc.violations]})
        except ContextMismatch as exc:
            return _error(400, "context_mismatch", str(exc))
        except (VsmSyntaxError, SchemaError) as exc:
            return _error(422, "schema_error", str(exc))
        except VsmInsightError as exc:
            return _error(400, type(exc).__name__.lower(), str(exc))
        context_id = store.create_context(vsm_bytes, handle.output)
        return {"context_id": context_id}

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        context_id = payload.get("context_id") if isinstance(payload, dict) else None
        if not isinstance(context_id, str) or not context_id:
            return _error(422, "schema_error", "body must carry a 'context_id' string")
        try:
            session_id = store.create_session(context_id)
        except KeyError as exc:
            return _error(404, "not_found", str(exc.args[0]))
        return {"session_id": session_id, "context_id": context_id}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return store.session(session_id)
        except KeyError as exc:
            return _error(404, "not_found", str(exc.args[0]))

    @app.post("/sessions/{session_id}/ask")
    def ask(session_id: str, payload: dict = Body(...)):
        try:
            meta = store.session(session_id)
        except KeyError as exc:
            return _error(404, "not_found", str(exc.args[0]))
        question = payload.get("question") if isinstance(payload, dict) else None
        if not isinstance(question, str) or not question.strip():
            return _error(422, "schema_error", "body must carry a non-empty 'question'")
        if not locks.try_acquire(session_id):
            return _error(409, "ask_in_progress",
                          "an answer is already in progress for this session")
        try:
            ctx = store.context(meta["context_id"])
            orchestrator, subworkflow = provider()
            answer = run_orchestrator(ctx, question, agent_cfg, orchestrator,
                                      subworkflow_backend=subworkflow)
            turn = store.record_turn(session_id, question, answer)
            # the ask response IS the persisted trace document, byte for byte
            return Response(content=store.trace_bytes(session_id, turn),
                            media_type="application/json")
        except OrchestratorBackendError as exc:
            return _error(502, "backend_error", str(exc),
                          {"steps": [s.to_dict() for s in exc.steps]})
        except VsmInsightError as exc:
            return _error(500, type(exc).__name__.lower(), str(exc))
        finally:
            locks.release(session_id)

    @app.get("/sessions/{session_id}/trace/{turn}")
    def get_trace(session_id: str, turn: int):
        try:
            return Response(content=store.trace_bytes(session_id, turn),
                            media_type="application/json")
        except KeyError as exc:
            return _error(404, "not_found", str(exc.args[0]))

    return app
