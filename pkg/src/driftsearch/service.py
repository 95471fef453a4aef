"""HTTP/JSON API for live interactive sessions.

Stateful service over the session machine: query bootstrap, feedback /
lock / delete mutations, highlights, archived-keyword carryover.  Every
mutating endpoint responds with the post-refit state, identical to what
an immediate GET would return.  Sessions persist as an append-only
operation log (one JSON record per line: {seq, op, payload, timestamp})
plus a snapshot, written on every mutation and on idle eviction, so
archives survive restarts and a recorded log can be replayed.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import CorpusIndex, load_newsgroups
from .errors import NoResultsError, NotFoundError, ValidationError
from .model import INTERACTIVE, PRESETS
from .session import FeedbackSource, SessionState, WeightMode


@dataclass
class ServiceSettings:
    """Configuration via environment variables or a flat config file."""

    corpus_path: str | None = None
    corpus_cache: str | None = None
    data_dir: str = "driftsearch-data"
    preset: str = "interactive"
    slice_k: int = 400
    session_ttl_seconds: float = 3600.0
    groups: int = 20
    per_group: int = 100
    static_dir: str | None = None

    @classmethod
    def from_env(cls, env=os.environ) -> "ServiceSettings":
        def get(name, default=None):
            return env.get(f"DRIFTSEARCH_{name}", default)

        return cls(
            corpus_path=get("CORPUS"),
            corpus_cache=get("CORPUS_CACHE"),
            data_dir=get("DATA_DIR", "driftsearch-data"),
            preset=get("PRESET", "interactive"),
            slice_k=int(get("SLICE_K", "400")),
            session_ttl_seconds=float(get("SESSION_TTL", "3600")),
            groups=int(get("GROUPS", "20")),
            per_group=int(get("PER_GROUP", "100")),
            static_dir=get("STATIC_DIR"),
        )


class CreateSessionBody(BaseModel):
    query: str
    import_archive: list[str] = []
    rng_seed: int | None = None  # set to replay a recorded session exactly


class FeedbackBody(BaseModel):
    term: str
    value: float


class LockBody(BaseModel):
    entry_id: str


@dataclass
class ManagedSession:
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    created_at: float = field(default_factory=time.time)
    last_activity: float = field(default_factory=time.time)
    op_seq: int = 0


def _session_view(state: SessionState) -> dict:
    docs = state.top_documents()
    highlights = {eid: level.value for eid, level in state.compute_highlights()}
    return {
        "session_id": state.session_id,
        "query": state.query,
        "keywords": [
            {
                "term": c.term,
                "estimated_relevance": round(c.estimated_relevance, 9),
                "displayed_relevance": round(c.displayed_relevance, 9),
            }
            for c in state.top_keywords()
        ],
        "documents": [
            {"doc_id": d, "score": round(s, 9)}
            for d, s in zip(docs.doc_ids, docs.scores)
        ],
        "timeline": [
            {
                "entry_id": e.entry_id,
                "term": e.term,
                "value": e.value,
                "locked": e.weight_mode is WeightMode.LOCKED,
                "deleted": e.weight_mode is WeightMode.DELETED,
                "source": e.source.value,
                "created_at": e.created_at,
                "highlight": highlights.get(e.entry_id, "none"),
            }
            for e in state.timeline_display_order()
        ],
        "archived": [
            {
                "source_session_id": a.source_session_id,
                "keywords": [{"term": t, "value": v} for t, v in a.keywords],
            }
            for a in state.archived
        ],
    }


class SessionStore:
    """In-memory sessions plus on-disk logs and snapshots."""

    def __init__(self, settings: ServiceSettings, corpus: CorpusIndex):
        self.settings = settings
        self.corpus = corpus
        self.sessions: dict[str, ManagedSession] = {}
        self.dir = Path(settings.data_dir) / "sessions"
        self.dir.mkdir(parents=True, exist_ok=True)
        self._store_lock = threading.Lock()

    def _snapshot_path(self, session_id: str) -> Path:
        return self.dir / f"{session_id}.snapshot.json"

    def _log_path(self, session_id: str) -> Path:
        return self.dir / f"{session_id}.log"

    def create(
        self, query: str, import_archive: list[str], rng_seed: int | None = None
    ) -> ManagedSession:
        session_id = uuid.uuid4().hex[:12]
        if rng_seed is None:
            rng_seed = int.from_bytes(session_id[:8].encode(), "big")
        state = SessionState(
            session_id,
            corpus=self.corpus,
            hyper=PRESETS.get(self.settings.preset, INTERACTIVE),
            rng_seed=rng_seed,
            slice_k=self.settings.slice_k,
        )
        for source_id in import_archive:
            keywords = self.archived_keywords(source_id)
            if keywords is None:
                raise NotFoundError(f"unknown archive session {source_id!r}")
            state.attach_archive(source_id, keywords)
        state.bootstrap_from_query(query)
        managed = ManagedSession(state=state)
        with self._store_lock:
            self.sessions[session_id] = managed
        self.log_op(
            managed,
            "create",
            {"query": query, "import_archive": import_archive, "rng_seed": rng_seed},
        )
        return managed

    def get(self, session_id: str) -> ManagedSession:
        with self._store_lock:
            managed = self.sessions.get(session_id)
        if managed is None:
            state = self.load_snapshot(session_id)
            if state is None:
                raise NotFoundError(f"unknown session {session_id!r}")
            managed = ManagedSession(state=state)
            with self._store_lock:
                self.sessions[session_id] = managed
        managed.last_activity = time.time()
        return managed

    def archived_keywords(self, session_id: str) -> list[tuple[str, float]] | None:
        with self._store_lock:
            managed = self.sessions.get(session_id)
        if managed is not None:
            return managed.state.archive_session()
        state = self.load_snapshot(session_id)
        return None if state is None else state.archive_session()

    def load_snapshot(self, session_id: str) -> SessionState | None:
        path = self._snapshot_path(session_id)
        if not path.exists():
            return None
        return SessionState.from_snapshot(json.loads(path.read_text()), corpus=self.corpus)

    def log_op(self, managed: ManagedSession, op: str, payload: dict) -> None:
        managed.op_seq += 1
        record = {
            "seq": managed.op_seq,
            "op": op,
            "payload": payload,
            "timestamp": time.time(),
        }
        with open(self._log_path(managed.state.session_id), "a") as fh:
            fh.write(json.dumps(record) + "\n")
        self._snapshot_path(managed.state.session_id).write_text(
            managed.state.to_snapshot_text()
        )

    def evict_idle(self) -> None:
        now = time.time()
        with self._store_lock:
            stale = [
                sid for sid, m in self.sessions.items()
                if now - m.last_activity > self.settings.session_ttl_seconds
            ]
            for sid in stale:
                managed = self.sessions.pop(sid)
                self._snapshot_path(sid).write_text(managed.state.to_snapshot_text())


def load_corpus(settings: ServiceSettings) -> CorpusIndex:
    if settings.corpus_cache and Path(settings.corpus_cache).exists():
        return CorpusIndex.load_cache(settings.corpus_cache)
    if not settings.corpus_path:
        raise ValidationError(
            "no corpus configured: set DRIFTSEARCH_CORPUS (dataset directory) "
            "or DRIFTSEARCH_CORPUS_CACHE (saved index)"
        )
    docs = load_newsgroups(settings.corpus_path, settings.per_group, settings.groups)
    index = CorpusIndex(docs)
    if settings.corpus_cache:
        index.save_cache(settings.corpus_cache)
    return index


def create_app(settings: ServiceSettings | None = None, corpus: CorpusIndex | None = None) -> FastAPI:
    settings = settings or ServiceSettings.from_env()
    corpus = corpus or load_corpus(settings)
    store = SessionStore(settings, corpus)
    app = FastAPI(title="driftsearch", version="0.1.0")
    app.state.store = store

    def managed_or_404(session_id: str) -> ManagedSession:
        try:
            return store.get(session_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        store.evict_idle()
        if not body.query.strip():
            raise HTTPException(status_code=400, detail="query must not be empty")
        try:
            managed = store.create(body.query, body.import_archive, body.rng_seed)
        except NoResultsError as exc:
            return JSONResponse(status_code=404, content={"error": "no_results", "detail": str(exc)})
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        with managed.lock:
            return _session_view(managed.state)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        managed = managed_or_404(session_id)
        with managed.lock:
            return _session_view(managed.state)

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: FeedbackBody):
        managed = managed_or_404(session_id)
        with managed.lock:
            try:
                managed.state.apply_feedback(body.term, body.value, FeedbackSource.USER_RADAR)
            except ValidationError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            store.log_op(managed, "feedback", {"term": body.term, "value": body.value})
            return _session_view(managed.state)

    @app.post("/sessions/{session_id}/lock")
    def post_lock(session_id: str, body: LockBody):
        managed = managed_or_404(session_id)
        with managed.lock:
            try:
                managed.state.lock_feedback(body.entry_id)
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            store.log_op(managed, "lock", {"entry_id": body.entry_id})
            return _session_view(managed.state)

    @app.delete("/sessions/{session_id}/feedback/{entry_id}")
    def delete_feedback(session_id: str, entry_id: str):
        managed = managed_or_404(session_id)
        with managed.lock:
            try:
                managed.state.delete_feedback(entry_id)
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            store.log_op(managed, "delete", {"entry_id": entry_id})
            return _session_view(managed.state)

    @app.get("/sessions/{session_id}/archive")
    def get_archive(session_id: str):
        keywords = store.archived_keywords(session_id)
        if keywords is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return {
            "session_id": session_id,
            "keywords": [{"term": t, "value": v} for t, v in keywords],
        }

    @app.delete("/sessions/{session_id}/archive/{source_session_id}")
    def remove_archive(session_id: str, source_session_id: str):
        managed = managed_or_404(session_id)
        with managed.lock:
            try:
                managed.state.remove_archive(source_session_id)
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            store.log_op(managed, "remove_archive", {"source_session_id": source_session_id})
            return _session_view(managed.state)

    @app.get("/documents/{doc_id:path}")
    def get_document(doc_id: str):
        try:
            doc = corpus.document(doc_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id!r}") from exc
        return {"doc_id": doc.doc_id, "label": doc.label, "text": doc.text}

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "documents": len(corpus.doc_ids), "vocabulary": corpus.dim}

    if settings.static_dir and Path(settings.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=settings.static_dir, html=True), name="ui")

    return app
