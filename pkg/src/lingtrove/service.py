"""HTTP facade over the store, name registry, game sessions, feedback, and
contribution flow.

Handlers delegate to exactly one module operation and translate its result;
business logic stays in the owning modules. Immutable resources (blocks) are
served cache-forever, mutable ones (names, the catalogue root) no-cache.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass
from email.parser import BytesParser
from email.policy import HTTP as HTTP_POLICY
from pathlib import Path

import uvicorn
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import align, consent, game, ingest
from .cas import (
    Cid,
    LocalStore,
    GatewayStore,
    NameRecord,
    NameRegistry,
    TieredStore,
)
from .datamodel import Sentence, SentenceMeta, decode, encode
from .errors import (
    ConsentError,
    DataError,
    GameError,
    IntegrityError,
    LingtroveError,
    NotFoundError,
    SignatureError,
    StaleSequenceError,
    StoreError,
    WrongKeyError,
)

IMMUTABLE = "public, max-age=31536000, immutable"
MUTABLE = "no-cache"


@dataclass
class ServiceConfig:
    store_dir: Path
    root_cid: Cid | None = None
    identity_name: str | None = None  # catalogue served from this identity
    contributor_name: str | None = None  # identity for contribute/revoke/keys
    listen: str = "127.0.0.1:8080"
    gateway_url: str | None = None
    static_dir: Path | None = None

    def __post_init__(self):
        self.store_dir = Path(self.store_dir)
        if (self.root_cid is None) == (self.identity_name is None):
            raise ValueError("configure exactly one of root_cid / identity_name")
        if self.contributor_name is None:
            self.contributor_name = self.identity_name

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])


_ERROR_CODES = [
    (NotFoundError, 404, "not_found"),
    (StaleSequenceError, 409, "stale_sequence"),
    (SignatureError, 400, "signature"),
    (WrongKeyError, 409, "wrong_key"),
    (ConsentError, 409, "consent"),
    (GameError, 409, "game"),
    (DataError, 400, "data"),
    (IntegrityError, 502, "integrity"),
    (StoreError, 503, "store"),
    (LingtroveError, 500, "internal"),
    (ValueError, 400, "bad_request"),
]


def _error_response(exc: Exception) -> JSONResponse:
    for etype, status, code in _ERROR_CODES:
        if isinstance(exc, etype):
            return JSONResponse(status_code=status,
                                content={"error": code, "detail": str(exc)})
    raise exc


class _Sessions:
    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: dict[str, tuple[game.GameSession, threading.Lock]] = {}

    def add(self, session: game.GameSession) -> str:
        token = secrets.token_urlsafe(16)
        with self._lock:
            self._sessions[token] = (session, threading.Lock())
        return token

    def acquire(self, token: str) -> tuple[game.GameSession, threading.Lock]:
        with self._lock:
            try:
                return self._sessions[token]
            except KeyError:
                raise NotFoundError(f"no session {token}") from None


def _task_view(session: game.GameSession) -> dict:
    task = session.current_task()
    tokens = [None if i == task.gap_index else t for i, t in enumerate(task.tokens)]
    return {
        "task_id": task.task_id,
        "clip_cid": task.clip.clip_cid,
        "length": task.clip.length,
        "tokens": tokens,
        "tags": list(task.tags),
        "gap_index": task.gap_index,
    }


def _state_view(session: game.GameSession) -> dict:
    state = session.display_state()
    return {"level": state["L"], "score": state["S"], "remaining": state["R"]}


def _find_task(session: game.GameSession, task_id: str | None) -> game.Task:
    if task_id is None:
        return session.current_task()
    for task in session.group:
        if task.task_id == task_id:
            return task
    raise GameError(f"task {task_id} is not in the active group")


def _parse_multipart(content_type: str | None, body: bytes) -> dict[str, bytes]:
    if not content_type or "multipart" not in content_type:
        raise ValueError("expected a multipart/form-data body")
    msg = BytesParser(policy=HTTP_POLICY).parsebytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body)
    parts: dict[str, bytes] = {}
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name:
            parts[name] = part.get_payload(decode=True) or b""
    return parts


def build_app(config: ServiceConfig) -> FastAPI:
    local = LocalStore(config.store_dir)
    gateway = GatewayStore(config.gateway_url) if config.gateway_url else None
    store = TieredStore(local, gateway) if gateway else local
    registry = NameRegistry(config.store_dir / "names.log")
    sessions = _Sessions()
    identity_lock = threading.Lock()

    app = FastAPI(title="lingtrove", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.registry = registry

    @app.exception_handler(LingtroveError)
    async def _lingtrove_error(request: Request, exc: LingtroveError):
        return _error_response(exc)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return _error_response(exc)

    @app.exception_handler(KeyError)
    async def _key_error(request: Request, exc: KeyError):
        return JSONResponse(status_code=400,
                            content={"error": "bad_request",
                                     "detail": f"missing field {exc}"})

    def catalogue_cid() -> Cid:
        if config.root_cid is not None:
            return config.root_cid
        return registry.resolve(config.identity_name)

    def contributor() -> consent.Identity:
        if not config.contributor_name:
            raise ConsentError("no contributor identity configured")
        return consent.load_identity(config.store_dir, config.contributor_name)

    # -- catalogue and blocks -------------------------------------------------

    @app.get("/api/root")
    def get_root():
        cid = catalogue_cid()
        return Response(content=store.get(cid), media_type="application/json",
                        headers={"Cache-Control": MUTABLE, "X-Root-Cid": cid})

    @app.get("/api/block/{cid}")
    def get_block(cid: str, request: Request):
        content = store.get(cid)
        headers = {"Cache-Control": IMMUTABLE, "Accept-Ranges": "bytes"}
        range_header = request.headers.get("range")
        if range_header:
            try:
                unit, _, spec = range_header.partition("=")
                start_s, _, end_s = spec.partition("-")
                if unit.strip() != "bytes":
                    raise ValueError
                if not start_s:  # suffix form: the last N bytes
                    start = max(0, len(content) - int(end_s))
                    end = len(content) - 1
                else:
                    start = int(start_s)
                    end = int(end_s) if end_s else len(content) - 1
                if start > end or start >= len(content):
                    raise ValueError
            except ValueError:
                return Response(status_code=416, headers=headers)
            end = min(end, len(content) - 1)
            headers["Content-Range"] = f"bytes {start}-{end}/{len(content)}"
            return Response(content=content[start:end + 1], status_code=206,
                            media_type="application/octet-stream", headers=headers)
        return Response(content=content, media_type="application/octet-stream",
                        headers=headers)

    @app.post("/api/block")
    async def post_block(request: Request):
        content = await request.body()
        return {"cid": store.put(content)}

    # -- names ------------------------------------------------------------

    @app.get("/api/name/{name}")
    def get_name(name: str):
        record = registry.latest(name)
        return JSONResponse(
            content={"name": record.name, "target": record.target,
                     "sequence": record.sequence},
            headers={"Cache-Control": MUTABLE})

    @app.post("/api/name/{name}")
    async def post_name(name: str, request: Request):
        record = NameRecord.from_jsonable(await request.json())
        if record.name != name:
            raise SignatureError("record name does not match the path")
        registry.submit(record)
        return {"name": record.name, "target": record.target,
                "sequence": record.sequence}

    # -- game sessions ------------------------------------------------------

    @app.post("/api/session")
    async def post_session(request: Request):
        body = await request.json()
        session = game.new_session(
            store, catalogue_cid(),
            language=body["language"], bucket=int(body.get("bucket", 0)),
            seed=body.get("seed"))
        token = sessions.add(session)
        return {"token": token, "state": _state_view(session)}

    @app.get("/api/session/{token}/task")
    def get_task(token: str):
        session, lock = sessions.acquire(token)
        with lock:
            return {"task": _task_view(session), "state": _state_view(session)}

    @app.post("/api/session/{token}/answer")
    async def post_answer(token: str, request: Request):
        body = await request.json()
        session, lock = sessions.acquire(token)
        with lock:
            task = _find_task(session, body.get("task_id"))
            outcome = session.submit(task, str(body.get("answer", "")),
                                     float(body["elapsed"]))
            return {
                "correct": outcome.correct,
                "expected": outcome.expected,
                "level_complete": outcome.level_complete,
                "level_passed": outcome.level_passed,
                "score_delta": outcome.score_delta,
                "state": _state_view(session),
            }

    @app.post("/api/session/{token}/discard")
    async def post_discard(token: str, request: Request):
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        session, lock = sessions.acquire(token)
        with lock:
            replacement = session.discard(_find_task(session, body.get("task_id")))
            return {"replaced": replacement is not None,
                    "state": _state_view(session)}

    @app.post("/api/session/{token}/skip")
    async def post_skip(token: str, request: Request):
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        session, lock = sessions.acquire(token)
        with lock:
            session.skip(_find_task(session, body.get("task_id")))
            return {"state": _state_view(session)}

    # -- pronunciation feedback --------------------------------------------

    @app.post("/api/feedback")
    async def post_feedback(request: Request):
        body = await request.json()
        segments = align.feedback(str(body["reference"]), str(body["hypothesis"]))
        return [s.to_jsonable() for s in segments]

    # -- consent ------------------------------------------------------------

    @app.post("/api/contribute")
    async def post_contribute(request: Request):
        parts = _parse_multipart(request.headers.get("content-type"),
                                 await request.body())
        if "audio" not in parts or "sentence_cid" not in parts:
            raise ValueError("multipart body needs audio and sentence_cid parts")
        sentence_cid = parts["sentence_cid"].decode("utf-8")
        sentence = decode(store.get(sentence_cid), Sentence)
        language = parts.get("language", b"").decode("utf-8") or sentence.language
        with identity_lock:
            identity = contributor()
            fpr = parts.get("fingerprint", b"").decode("utf-8") or identity.active
            if not fpr or fpr not in identity.session_keys:
                raise ConsentError(f"no local session key {fpr!r}")
            meta_cid = parts.get("meta_cid", b"").decode("utf-8")
            if not meta_cid:
                tokens = ingest.tokenize(sentence.content)
                meta = SentenceMeta(sentence_cid=sentence_cid, tokens=tuple(tokens),
                                    tags=tuple(ingest.tag_tokens(tokens)))
                meta_cid = store.put(encode(meta))
            root_cid = consent.contribute(
                identity, identity.session_keys[fpr], language,
                parts["audio"], sentence_cid, meta_cid, store, registry)
        return {"root_cid": root_cid, "fingerprint": fpr}

    @app.post("/api/revoke")
    async def post_revoke(request: Request):
        body = await request.json()
        with identity_lock:
            identity = contributor()
            root_cid = consent.revoke(identity, str(body["fingerprint"]),
                                      store, registry)
        return {"root_cid": root_cid}

    @app.get("/api/keys")
    def get_keys():
        identity = contributor()
        return {"keys": [
            {"fingerprint": fpr, "words": key.words,
             "active": fpr == identity.active}
            for fpr, key in sorted(identity.session_keys.items())
        ]}

    @app.post("/api/keys/roll")
    def post_roll():
        with identity_lock:
            identity = contributor()
            key = consent.roll_key(identity)
        return {"fingerprint": key.fingerprint, "words": key.words}

    @app.get("/api/identity")
    def get_identity():
        identity = contributor()
        opened = consent.open_identity(store, registry, identity.name)
        return {
            "name": identity.name,
            "cid": opened.cid,
            "encrypted": opened.encrypted,
            "sessions": [
                {"fingerprint": s.fingerprint, "words": s.words,
                 "status": s.status, "clips": s.clip_count(),
                 "languages": sorted(s.clips)}
                for s in opened.sessions
            ],
        }

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.static_dir, html=True),
                  name="static")

    return app


def serve(config: ServiceConfig) -> None:
    """Run until interrupted."""
    uvicorn.run(build_app(config), host=config.host, port=config.port,
                log_level="warning")
