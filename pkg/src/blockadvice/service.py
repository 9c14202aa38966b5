"""HTTP service exposing interactive advising sessions.

JSON over HTTP under ``/v1/``; errors follow ``{code, message, expected?}``.
Sessions live in memory behind per-session locks; an optional append-only
JSONL event log records every transition with a post-transition state
snapshot, and :func:`replay_event_log` rebuilds byte-identical sessions
from it. Models are loaded read-only from a registry directory; training
never happens here.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, Request
from fastapi.exceptions import HTTPException, RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .advice import AdviceKind, AdviceSentence, Head, tokenize_words
from .data import Dataset, load_dataset
from .nn import Rng
from .protocols import (
    AdvisorEvent,
    EventKind,
    ProtocolError,
    ProtocolKind,
    ProtocolModels,
    Session,
    _example_json,
    expected_events,
    oracle_event,
    start_session,
    step,
)
from .registry import (
    DEFAULT_MODEL_IDS,
    ModelNotFound,
    ModelRegistry,
    RegistryError,
    load_protocol_models,
)
from .world import normalized_error

MAX_OOV_FRACTION = 0.5

_PHRASING_HINTS = (
    "the block is in the top left",
    "the target is in the right half",
    "move down",
)


@dataclass(frozen=True)
class ServiceConfig:
    models_dir: str | Path
    dataset_path: str | Path
    static_dir: str | Path | None = None
    log_path: str | Path | None = None
    default_models: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_MODEL_IDS))
    selfgen_family: str = "train"
    oracle_family: str = "test"
    random_split: str = "test"
    seed: int = 0


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, expected=None) -> None:
        super().__init__(message)
        self.status = status
        self.body = {"code": code, "message": message}
        if expected is not None:
            self.body["expected"] = list(expected)


@dataclass
class SessionRecord:
    session: Session
    models: ProtocolModels
    rng_stream: object  # numpy Generator driving this session's templates
    lock: threading.Lock = field(default_factory=threading.Lock)


class ServiceState:
    """Everything behind the endpoints: models, dataset, sessions, log."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self.registry = ModelRegistry(config.models_dir)
        self.dataset: Dataset = load_dataset(config.dataset_path)
        self.examples = {ex.id: ex for ex in self.dataset.all_examples()}
        self.sessions: dict[str, SessionRecord] = {}
        self._sessions_lock = threading.Lock()
        self._idempotency: dict[tuple[str, str], tuple[int, str]] = {}
        self._idempotency_lock = threading.Lock()
        self._log_lock = threading.Lock()
        self._seq = 0
        self._random_count = 0
        self.log_path = Path(config.log_path) if config.log_path else None

    # -- model resolution ---------------------------------------------------

    def resolve_models(
        self, protocol: ProtocolKind, overrides: Mapping[str, str] | None
    ) -> ProtocolModels:
        names = dict(self.config.default_models)
        names.update(overrides or {})
        try:
            return load_protocol_models(self.registry, protocol, names)
        except ModelNotFound as e:
            raise ApiError(404, "not_found", str(e)) from e
        except RegistryError as e:
            raise ApiError(422, "invalid_request", str(e)) from e

    # -- example selection --------------------------------------------------

    def pick_example(self, example_id: str | None):
        if example_id is None or example_id == "random":
            split = self.dataset.split(self.config.random_split)
            with self._sessions_lock:
                gen = Rng(self.config.seed).child("random-example").fork(self._random_count)
                self._random_count += 1
            return split[int(gen.generator.integers(len(split)))]
        ex = self.examples.get(example_id)
        if ex is None:
            raise ApiError(404, "not_found", f"no such example: {example_id!r}")
        return ex

    # -- session bookkeeping ------------------------------------------------

    def session_rng(self, session_id: str):
        return Rng(self.config.seed).child(f"session.{session_id}").generator

    def add_session(self, record: SessionRecord) -> None:
        with self._sessions_lock:
            self.sessions[record.session.id] = record

    def get_record(self, session_id: str) -> SessionRecord:
        with self._sessions_lock:
            rec = self.sessions.get(session_id)
        if rec is None:
            raise ApiError(404, "not_found", f"no such session: {session_id!r}")
        return rec

    # -- event log ----------------------------------------------------------

    def log_transition(self, action: dict, session: Session) -> None:
        if self.log_path is None:
            return
        with self._log_lock:
            self._seq += 1
            line = json.dumps(
                {"seq": self._seq, "action": action, "state": session.to_json()},
                sort_keys=True,
            )
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")

    # -- idempotency --------------------------------------------------------

    def idempotent(self, scope: str, key: str | None):
        if key is None:
            return None
        with self._idempotency_lock:
            hit = self._idempotency.get((scope, key))
        if hit is None:
            return None
        status, body = hit
        return JSONResponse(status_code=status, content=json.loads(body))

    def remember(self, scope: str, key: str | None, status: int, body: dict) -> None:
        if key is None:
            return
        with self._idempotency_lock:
            self._idempotency[(scope, key)] = (status, json.dumps(body, sort_keys=True))


# ---------------------------------------------------------------------------
# request bodies


class CreateSessionRequest(BaseModel):
    protocol: str
    example_id: str | None = None
    models: dict[str, str] | None = None


class AdviceRequest(BaseModel):
    head: str
    text: str


class RetryRequest(BaseModel):
    head: str | None = None


def _parse_protocol(name: str) -> ProtocolKind:
    try:
        return ProtocolKind(name)
    except ValueError:
        raise ApiError(
            422,
            "invalid_request",
            f"unknown protocol {name!r}",
            expected=[k.value for k in ProtocolKind],
        )


def _parse_head(name: str) -> Head:
    try:
        return Head(name)
    except ValueError:
        raise ApiError(422, "invalid_request", f"unknown head {name!r}", expected=["source", "target"])


def _session_body(session: Session) -> dict:
    body = session.to_json()
    body["board"] = body["example"]["world"]
    body["prediction"] = body["history"][-1]["prediction"] if body["history"] else None
    return body


# ---------------------------------------------------------------------------
# app


def create_app(config: ServiceConfig) -> FastAPI:
    state = ServiceState(config)
    app = FastAPI(title="blockadvice", version="1")
    app.state.service = state

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body)

    @app.exception_handler(ProtocolError)
    async def _protocol_error(_request: Request, exc: ProtocolError):
        return JSONResponse(
            status_code=409,
            content={"code": "illegal_event", "message": str(exc), "expected": list(exc.expected)},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError):
        message = "; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        )
        return JSONResponse(
            status_code=422, content={"code": "invalid_request", "message": message}
        )

    @app.exception_handler(HTTPException)
    async def _http_error(_request: Request, exc: HTTPException):
        body = exc.detail if isinstance(exc.detail, dict) else {
            "code": "error",
            "message": str(exc.detail),
        }
        return JSONResponse(status_code=exc.status_code, content=body)

    def _idempotency_key(request: Request) -> str | None:
        return request.headers.get("Idempotency-Key")

    @app.post("/v1/sessions")
    def create_session(body: CreateSessionRequest, request: Request):
        key = _idempotency_key(request)
        replayed = state.idempotent("sessions", key)
        if replayed is not None:
            return replayed
        protocol = _parse_protocol(body.protocol)
        example = state.pick_example(body.example_id)
        models = state.resolve_models(protocol, body.models)
        session_id = secrets.token_hex(16)
        rng = state.session_rng(session_id)
        session = start_session(
            session_id, protocol, example, models, rng,
            selfgen_family=config.selfgen_family,
        )
        state.add_session(SessionRecord(session=session, models=models, rng_stream=rng))
        state.log_transition(
            {
                "type": "create",
                "session_id": session_id,
                "protocol": protocol.value,
                "example_id": example.id,
                "models": dict(models.ids),
            },
            session,
        )
        out = _session_body(session)
        state.remember("sessions", key, 200, out)
        return out

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        rec = state.get_record(session_id)
        with rec.lock:
            return _session_body(rec.session)

    def _apply_event(session_id: str, request: Request, action: dict, event_builder):
        """Shared mutation path: lock, idempotency, step, log, respond."""
        rec = state.get_record(session_id)
        key = _idempotency_key(request)
        scope = f"{session_id}:{action['type']}"
        with rec.lock:
            replayed = state.idempotent(scope, key)
            if replayed is not None:
                return replayed
            event = event_builder(rec)
            step(
                rec.session, rec.models, event, rec.rng_stream,
                selfgen_family=config.selfgen_family,
            )
            state.log_transition({"session_id": session_id, **action}, rec.session)
            out = _session_body(rec.session)
            state.remember(scope, key, 200, out)
            return out

    @app.post("/v1/sessions/{session_id}/advice")
    def post_advice(session_id: str, body: AdviceRequest, request: Request):
        head = _parse_head(body.head)

        def build(rec: SessionRecord) -> AdvisorEvent:
            session = rec.session
            if session.protocol is ProtocolKind.CORRECTIVE:
                event_kind, advice_kind = EventKind.CORRECTIVE_ADVICE, AdviceKind.CORRECTIVE
            else:
                event_kind, advice_kind = EventKind.RESTRICTIVE_ADVICE, AdviceKind.RESTRICTIVE
            # protocol legality first (so Done/baseline answer 409), then
            # reject advice the models cannot read without burning the event
            allowed = expected_events(session)
            if event_kind.value not in allowed:
                raise ProtocolError(
                    f"event {event_kind.value!r} not legal for "
                    f"{session.protocol.value} session in phase {session.phase.value}",
                    expected=allowed,
                )
            vocab = rec.models.predictor.advice_vocab
            if not tokenize_words(body.text):
                raise ApiError(422, "untokenizable_advice", f"no tokens in {body.text!r}")
            if vocab is not None and vocab.oov_fraction(body.text) > MAX_OOV_FRACTION:
                hints = "; ".join(_PHRASING_HINTS)
                raise ApiError(
                    422,
                    "untokenizable_advice",
                    f"more than half the words are out of vocabulary; "
                    f"supported phrasings look like: {hints}",
                )
            return AdvisorEvent(event_kind, {head: AdviceSentence(body.text, advice_kind)})

        return _apply_event(
            session_id, request,
            {"type": "advice", "head": body.head, "text": body.text},
            build,
        )

    @app.post("/v1/sessions/{session_id}/retry")
    def post_retry(session_id: str, request: Request, body: RetryRequest | None = None):
        heads: tuple[Head, ...] = ()
        if body is not None and body.head is not None:
            heads = (_parse_head(body.head),)
        return _apply_event(
            session_id, request,
            {"type": "retry", "heads": [h.value for h in heads]},
            lambda rec: AdvisorEvent(EventKind.RETRY, heads=heads),
        )

    @app.post("/v1/sessions/{session_id}/accept")
    def post_accept(session_id: str, request: Request):
        return _apply_event(
            session_id, request,
            {"type": "accept"},
            lambda rec: AdvisorEvent(EventKind.ACCEPT),
        )

    @app.get("/v1/sessions/{session_id}/oracle")
    def get_oracle(session_id: str):
        """Debug view: gold coordinates, current errors, and what the
        oracle advisor would say about the latest prediction."""
        rec = state.get_record(session_id)
        with rec.lock:
            session = rec.session
            ex = session.example
            final = session.history[-1].prediction
            out = {
                "gold_source": [ex.gold_source.x, ex.gold_source.y, ex.gold_source.z],
                "gold_target": [ex.gold_target.x, ex.gold_target.y, ex.gold_target.z],
                "errors": {
                    h.value: normalized_error(
                        final.head_coord(h),
                        ex.gold_source if h is Head.SOURCE else ex.gold_target,
                        ex.world.block_length,
                    )
                    for h in Head
                },
                "advice": None,
            }
            if session.protocol in (
                ProtocolKind.RESTRICTIVE, ProtocolKind.CORRECTIVE, ProtocolKind.RETRY
            ):
                gen = Rng(config.seed).child(
                    f"oracle-view.{session_id}.{len(session.history)}"
                ).generator
                out["advice"] = oracle_event(
                    session, gen, family=config.oracle_family
                ).to_json()
            return out

    @app.get("/v1/models")
    def get_models():
        return {"models": state.registry.list_models()}

    @app.get("/v1/examples/{example_id}")
    def get_example(example_id: str):
        ex = state.examples.get(example_id)
        if ex is None:
            raise ApiError(404, "not_found", f"no such example: {example_id!r}")
        split = next((name for name, rows in state.dataset.splits.items() if ex in rows), None)
        return {"example": _example_json(ex), "split": split}

    if config.static_dir is not None and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(config.static_dir), html=True), name="ui")

    return app


# ---------------------------------------------------------------------------
# event-log replay


class ReplayError(Exception):
    pass


def replay_event_log(log_path: str | Path, state: ServiceState) -> dict[str, Session]:
    """Re-execute a JSONL event log and verify byte-identical snapshots.

    The given state must be built from the same models and dataset that
    produced the log (and should have logging disabled).
    """
    sessions: dict[str, Session] = {}
    models: dict[str, ProtocolModels] = {}
    rngs: dict[str, object] = {}  # template streams stay live across steps
    with open(log_path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            entry = json.loads(line)
            action = entry["action"]
            sid = action["session_id"]
            kind = action["type"]
            if kind == "create":
                protocol = ProtocolKind(action["protocol"])
                example = state.examples[action["example_id"]]
                m = state.resolve_models(protocol, action["models"])
                rng = state.session_rng(sid)
                session = start_session(
                    sid, protocol, example, m, rng,
                    selfgen_family=state.config.selfgen_family,
                )
                sessions[sid] = session
                models[sid] = m
                rngs[sid] = rng
            else:
                session = sessions[sid]
                rng = rngs[sid]
                if kind == "advice":
                    head = Head(action["head"])
                    if session.protocol is ProtocolKind.CORRECTIVE:
                        ek, ak = EventKind.CORRECTIVE_ADVICE, AdviceKind.CORRECTIVE
                    else:
                        ek, ak = EventKind.RESTRICTIVE_ADVICE, AdviceKind.RESTRICTIVE
                    event = AdvisorEvent(ek, {head: AdviceSentence(action["text"], ak)})
                elif kind == "retry":
                    event = AdvisorEvent(
                        EventKind.RETRY, heads=tuple(Head(h) for h in action["heads"])
                    )
                elif kind == "accept":
                    event = AdvisorEvent(EventKind.ACCEPT)
                else:
                    raise ReplayError(f"line {line_no}: unknown action {kind!r}")
                step(
                    session, models[sid], event, rng,
                    selfgen_family=state.config.selfgen_family,
                )
            got = json.dumps(session.to_json(), sort_keys=True)
            want = json.dumps(entry["state"], sort_keys=True)
            if got != want:
                raise ReplayError(f"line {line_no}: replayed state diverges from snapshot")
    return sessions
