"""Tipline matching service.

Submissions are scrubbed, embedded, matched against everything seen so
far, and filed by the similarity band: attach automatically at high
similarity, queue suggestions for human review in the middle band, or
open a new claim cluster.  Every state change appends one event to a
line-delimited log; restart replays the log (optionally on top of a
snapshot) and lands in the identical state without consulting the
embedding provider.

FastAPI resolves endpoint annotations at request time, so this module
keeps runtime annotations (no deferred-annotations import).
"""

import json
import logging
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .bm25 import InvertedIndex
from .cluster import OnlineSingleLinkClusterer
from .corpus import Message, Source, has_content, scrub_pii
from .embedding import EmbeddingProvider, ProviderError, VectorStore
from .matcher import MatchConfig, MatchDecision, decide_band, rank_candidates

logger = logging.getLogger(__name__)

MAX_SUGGESTIONS = 5


class ServiceError(Exception):
    """Base for request-level failures; carries an error code and detail."""

    status = 500
    code = "internal"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class UnknownIdError(ServiceError):
    status = 404
    code = "unknown_id"


class ConflictError(ServiceError):
    status = 409
    code = "already_resolved"


class EmptyMessageError(ServiceError):
    status = 400
    code = "empty_message"


class InvalidRequestError(ServiceError):
    status = 400
    code = "invalid_request"


class ProviderUnavailableError(ServiceError):
    status = 503
    code = "provider_unavailable"


class ReviewState(str, Enum):
    PENDING = "pending"
    CONFIRMED = "confirmed"
    REJECTED = "rejected"


@dataclass
class ReviewItem:
    id: str
    query_id: str
    candidate_id: str
    cosine: float
    state: ReviewState = ReviewState.PENDING
    created_at: str = ""
    resolved_by: Optional[str] = None
    resolved_at: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "query_id": self.query_id,
            "candidate_id": self.candidate_id,
            "cosine": self.cosine,
            "state": self.state.value,
            "created_at": self.created_at,
            "resolved_by": self.resolved_by,
            "resolved_at": self.resolved_at,
        }


@dataclass(frozen=True)
class SubmissionOutcome:
    message_id: str
    decision: MatchDecision
    attached_cluster_id: Optional[int]
    cluster_id: int
    suggestions: list[tuple[str, float]]
    review_ids: list[str]

    def to_record(self) -> dict:
        return {
            "message_id": self.message_id,
            "decision": self.decision.value,
            "attached_cluster_id": self.attached_cluster_id,
            "cluster_id": self.cluster_id,
            "suggestions": [
                {"candidate_id": cid, "cosine": cos} for cid, cos in self.suggestions
            ],
            "review_ids": list(self.review_ids),
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _encode_vector(vec: np.ndarray) -> str:
    return " ".join(f"{float(v):.9g}" for v in np.asarray(vec, dtype=np.float32))


def _decode_vector(text: str) -> np.ndarray:
    return np.array(text.split(), dtype=np.float32)


@dataclass
class _QueuedMessage:
    text: str
    language: str
    source: str
    queued_at: str


class MatchingService:
    """Single-writer matching state with an append-only event log.

    All mutation goes through one lock; reads take it briefly so every
    response reflects a fully applied event.  Events record the embedding
    vector and every assigned id, so replay is exact and provider-free.
    """

    def __init__(
        self,
        provider: EmbeddingProvider,
        data_dir,
        config: MatchConfig = MatchConfig(),
    ):
        self.provider = provider
        self.config = config
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.data_dir / "events.jsonl"
        self.snapshot_path = self.data_dir / "snapshot.json"

        self._lock = threading.Lock()
        self._messages: dict[str, Message] = {}
        self._index = InvertedIndex()
        self._store = VectorStore.empty(provider.dim)
        self._clusters = OnlineSingleLinkClusterer(config.suggest_threshold)
        self._reviews: dict[str, ReviewItem] = {}
        self._queued: list[_QueuedMessage] = []
        self._next_message = 1
        self._next_review = 1
        self._events_applied = 0
        self._log_fh = None

        self._recover()
        self._log_fh = open(self.events_path, "a", encoding="utf-8")

    # -- persistence -------------------------------------------------------

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    def _append_event(self, event: dict) -> None:
        self._log_fh.write(json.dumps(event, ensure_ascii=False) + "\n")
        self._log_fh.flush()
        os.fsync(self._log_fh.fileno())
        self._events_applied += 1

    def _recover(self) -> None:
        start_from = 0
        if self.snapshot_path.exists():
            with open(self.snapshot_path, encoding="utf-8") as fh:
                snap = json.load(fh)
            self._load_snapshot(snap)
            start_from = snap["events_applied"]
            self._events_applied = start_from
        if self.events_path.exists():
            with open(self.events_path, encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    if i < start_from or not line.strip():
                        continue
                    self._apply_event(json.loads(line))
                    self._events_applied += 1

    def snapshot(self) -> None:
        """Write a point-in-time state file; replay resumes after it."""
        with self._lock:
            snap = self._dump_snapshot()
            tmp = self.snapshot_path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(snap, fh, ensure_ascii=False)
            os.replace(tmp, self.snapshot_path)

    def _dump_snapshot(self) -> dict:
        return {
            "events_applied": self._events_applied,
            "next_message": self._next_message,
            "next_review": self._next_review,
            "next_cluster": self._clusters.next_cluster_id,
            "messages": [
                {
                    "id": m.id,
                    "text": m.text,
                    "language": m.language,
                    "source": m.source.value,
                    "vector": _encode_vector(self._store.get(m.id)),
                }
                for m in self._messages.values()
            ],
            "clusters": {
                str(cid): sorted(members)
                for cid, members in self._clusters.clusters_of_size(1)
            },
            "reviews": [r.to_record() for r in self._reviews.values()],
            "queued": [vars(q) for q in self._queued],
        }

    def _load_snapshot(self, snap: dict) -> None:
        vectors: dict[str, np.ndarray] = {}
        for rec in snap["messages"]:
            msg = Message(
                id=rec["id"], text=rec["text"], source=Source(rec["source"]),
                language=rec["language"],
            )
            vec = _decode_vector(rec["vector"])
            vectors[msg.id] = vec
            self._messages[msg.id] = msg
            self._index.add(msg.id, msg.text)
            self._store.add(msg.id, vec)
        for cid_str, member_ids in snap["clusters"].items():
            self._clusters.restore_cluster(
                int(cid_str), {mid: vectors[mid] for mid in member_ids}
            )
        self._clusters.advance_cluster_counter(int(snap["next_cluster"]))
        for rec in snap["reviews"]:
            item = ReviewItem(
                id=rec["id"], query_id=rec["query_id"],
                candidate_id=rec["candidate_id"], cosine=rec["cosine"],
                state=ReviewState(rec["state"]), created_at=rec["created_at"],
                resolved_by=rec["resolved_by"], resolved_at=rec["resolved_at"],
            )
            self._reviews[item.id] = item
        for rec in snap["queued"]:
            self._queued.append(_QueuedMessage(**rec))
        self._next_message = int(snap["next_message"])
        self._next_review = int(snap["next_review"])

    # -- event replay --------------------------------------------------------

    def _apply_event(self, event: dict) -> None:
        kind = event["event"]
        if kind == "message_added":
            msg = Message(
                id=event["id"], text=event["text"], source=Source(event["source"]),
                language=event["language"],
            )
            vec = _decode_vector(event["vector"])
            self._file_message(
                msg, vec,
                decision=MatchDecision(event["decision"]),
                cluster_id=int(event["cluster_id"]),
            )
            self._next_message = int(event["id"].split("-")[1]) + 1
        elif kind == "review_created":
            item = ReviewItem(
                id=event["id"], query_id=event["query_id"],
                candidate_id=event["candidate_id"], cosine=event["cosine"],
                created_at=event["at"],
            )
            self._reviews[item.id] = item
            self._next_review = int(item.id.split("-")[1]) + 1
        elif kind == "review_resolved":
            self._apply_resolution(
                event["id"], event["verdict"], event.get("reviewer"), event["at"]
            )
        elif kind == "manual_match":
            self._apply_manual_match(event["id_a"], event["id_b"])
        elif kind == "message_queued":
            self._queued.append(
                _QueuedMessage(
                    text=event["text"], language=event["language"],
                    source=event["source"], queued_at=event["at"],
                )
            )
        else:
            raise ValueError(f"unknown event type {kind!r} in log")

    # -- core transitions ------------------------------------------------------

    def _file_message(
        self, msg: Message, vec: np.ndarray, decision: MatchDecision, cluster_id: int
    ) -> None:
        """Store, index, and cluster one accepted message."""
        self._messages[msg.id] = msg
        self._index.add(msg.id, msg.text)
        self._store.add(msg.id, vec)
        if decision == MatchDecision.AUTO_MATCHED:
            self._clusters.add_to_cluster(msg.id, vec, cluster_id)
        else:
            assigned = self._clusters.new_cluster(msg.id, vec)
            if assigned != cluster_id:
                raise ValueError(
                    f"replay mismatch: cluster {assigned} assigned where the "
                    f"log recorded {cluster_id}"
                )

    def _apply_resolution(
        self, review_id: str, verdict: str, reviewer: Optional[str], at: str
    ) -> ReviewItem:
        item = self._reviews.get(review_id)
        if item is None:
            raise UnknownIdError(f"no review {review_id!r}")
        if item.state != ReviewState.PENDING:
            raise ConflictError(
                f"review {review_id!r} is already {item.state.value}; "
                "the first verdict stands"
            )
        if verdict == "confirm":
            self._clusters.merge_clusters(
                [
                    self._clusters.cluster_of(item.query_id),
                    self._clusters.cluster_of(item.candidate_id),
                ]
            )
            item.state = ReviewState.CONFIRMED
        elif verdict == "reject":
            item.state = ReviewState.REJECTED
        else:
            raise InvalidRequestError(
                f"verdict must be confirm or reject, got {verdict!r}"
            )
        item.resolved_by = reviewer
        item.resolved_at = at
        return item

    def _apply_manual_match(self, id_a: str, id_b: str) -> int:
        for mid in (id_a, id_b):
            if mid not in self._messages:
                raise UnknownIdError(f"no message {mid!r}")
        ca = self._clusters.cluster_of(id_a)
        cb = self._clusters.cluster_of(id_b)
        if ca == cb:
            return ca
        return self._clusters.merge_clusters([ca, cb])

    # -- public operations -------------------------------------------------------

    def submit_message(
        self, text: str, language: str = "und", source: str = Source.TIPLINE.value
    ) -> SubmissionOutcome:
        scrubbed = scrub_pii(text)
        if not has_content(scrubbed):
            raise EmptyMessageError("message is empty after scrubbing")
        try:
            source_val = Source(source)
        except ValueError as exc:
            raise InvalidRequestError(
                f"source must be one of {[s.value for s in Source]}, got {source!r}"
            ) from exc
        with self._lock:
            try:
                vec = np.asarray(
                    self.provider.embed_batch([scrubbed])[0], dtype=np.float32
                )
            except ProviderError as exc:
                logger.warning("provider failed; queueing message: %s", exc)
                at = _now()
                self._append_event(
                    {
                        "event": "message_queued", "at": at, "text": scrubbed,
                        "language": language, "source": source_val.value,
                    }
                )
                self._queued.append(
                    _QueuedMessage(scrubbed, language, source_val.value, at)
                )
                raise ProviderUnavailableError(
                    f"embedding provider failed: {exc}"
                ) from exc

            ranked = rank_candidates(
                scrubbed, vec, self._index, self._store, self.config.retrieval_depth
            )
            best = ranked[0].cosine if ranked else None
            decision = decide_band(best, self.config)

            msg_id = f"msg-{self._next_message:06d}"
            self._next_message += 1
            msg = Message(id=msg_id, text=scrubbed, source=source_val, language=language)

            suggestions: list[tuple[str, float]] = []
            review_ids: list[str] = []
            if decision == MatchDecision.AUTO_MATCHED:
                cluster_id = self._clusters.cluster_of(ranked[0].doc_id)
                attached = cluster_id
            else:
                cluster_id = self._clusters.next_cluster_id
                attached = None
                if decision == MatchDecision.SUGGESTED:
                    in_band = [
                        c for c in ranked
                        if self.config.suggest_threshold <= c.cosine
                        < self.config.auto_match_threshold
                    ]
                    suggestions = [
                        (c.doc_id, c.cosine) for c in in_band[:MAX_SUGGESTIONS]
                    ]

            now = _now()
            self._append_event(
                {
                    "event": "message_added", "at": now, "id": msg_id,
                    "text": scrubbed, "language": language,
                    "source": source_val.value, "vector": _encode_vector(vec),
                    "decision": decision.value, "cluster_id": cluster_id,
                    "best_cosine": best,
                }
            )
            self._file_message(msg, vec, decision, cluster_id)

            for cand_id, cos in suggestions:
                review_id = f"rev-{self._next_review:06d}"
                self._next_review += 1
                self._append_event(
                    {
                        "event": "review_created", "at": now, "id": review_id,
                        "query_id": msg_id, "candidate_id": cand_id, "cosine": cos,
                    }
                )
                self._reviews[review_id] = ReviewItem(
                    id=review_id, query_id=msg_id, candidate_id=cand_id,
                    cosine=cos, created_at=now,
                )
                review_ids.append(review_id)

            return SubmissionOutcome(
                message_id=msg_id, decision=decision, attached_cluster_id=attached,
                cluster_id=self._clusters.cluster_of(msg_id),
                suggestions=suggestions, review_ids=review_ids,
            )

    def preview_message(self, text: str, language: str = "und") -> dict:
        """Rank candidates for a text without persisting anything.

        Same scrub/embed/band pipeline as submit_message, but no message is
        created, no event is logged, and a provider failure queues nothing.
        """
        scrubbed = scrub_pii(text)
        if not has_content(scrubbed):
            raise EmptyMessageError("message is empty after scrubbing")
        with self._lock:
            try:
                vec = np.asarray(
                    self.provider.embed_batch([scrubbed])[0], dtype=np.float32
                )
            except ProviderError as exc:
                raise ProviderUnavailableError(
                    f"embedding provider failed: {exc}"
                ) from exc
            ranked = rank_candidates(
                scrubbed, vec, self._index, self._store, self.config.retrieval_depth
            )
            best = ranked[0].cosine if ranked else None
            return {
                "preview": True,
                "decision": decide_band(best, self.config).value,
                "best_cosine": best,
                "candidates": [
                    {
                        "id": c.doc_id,
                        "text": self._messages[c.doc_id].text,
                        "cosine": c.cosine,
                        "cluster_id": self._clusters.cluster_of(c.doc_id),
                    }
                    for c in ranked[:MAX_SUGGESTIONS]
                ],
            }

    def resolve_review(
        self, review_id: str, verdict: str, reviewer: Optional[str] = None
    ) -> ReviewItem:
        with self._lock:
            at = _now()
            item = self._apply_resolution(review_id, verdict, reviewer, at)
            self._append_event(
                {
                    "event": "review_resolved", "at": at, "id": review_id,
                    "verdict": verdict, "reviewer": reviewer,
                }
            )
            return item

    def add_manual_match(
        self, id_a: str, id_b: str, reviewer: Optional[str] = None
    ) -> int:
        with self._lock:
            merged = self._apply_manual_match(id_a, id_b)
            self._append_event(
                {
                    "event": "manual_match", "at": _now(), "id_a": id_a,
                    "id_b": id_b, "reviewer": reviewer,
                }
            )
            return merged

    # -- read side ---------------------------------------------------------------

    def get_message(self, message_id: str) -> Message:
        with self._lock:
            msg = self._messages.get(message_id)
            if msg is None:
                raise UnknownIdError(f"no message {message_id!r}")
            return msg

    def list_reviews(self, state: Optional[str] = "pending") -> list[ReviewItem]:
        """Reviews ordered by descending cosine, newest first on ties."""
        with self._lock:
            items = list(self._reviews.values())
        if state and state != "all":
            try:
                wanted = ReviewState(state)
            except ValueError as exc:
                raise InvalidRequestError(f"unknown review state {state!r}") from exc
            items = [r for r in items if r.state == wanted]
        items.sort(key=lambda r: (r.created_at, r.id), reverse=True)
        items.sort(key=lambda r: -r.cosine)
        return items

    def list_clusters(self, min_size: int = 1) -> list[tuple[int, int]]:
        """(cluster id, size) pairs, largest cluster first."""
        with self._lock:
            return [
                (cid, len(members))
                for cid, members in self._clusters.clusters_of_size(min_size)
            ]

    def cluster_detail(self, cluster_id: int) -> dict:
        with self._lock:
            try:
                members = sorted(self._clusters.members(cluster_id))
            except KeyError as exc:
                raise UnknownIdError(f"no cluster {cluster_id}") from exc
            reps = self._clusters.representatives(cluster_id, seed=cluster_id)
            texts = {m: self._messages[m].text for m in members}
        return {
            "id": cluster_id,
            "size": len(members),
            "members": [{"id": m, "text": texts[m]} for m in members],
            "representatives": {
                "medoid": {"id": reps.medoid, "text": texts[reps.medoid]},
                "anti_medoid": {"id": reps.anti_medoid, "text": texts[reps.anti_medoid]},
                "random": {"id": reps.random, "text": texts[reps.random]},
            },
        }

    def health(self) -> dict:
        with self._lock:
            return {
                "status": "ok",
                "messages": len(self._messages),
                "pending_reviews": sum(
                    1 for r in self._reviews.values() if r.state == ReviewState.PENDING
                ),
                "clusters": len(self._clusters.cluster_ids()),
                "queued": len(self._queued),
                "provider": self.provider.name,
            }

    def state_fingerprint(self) -> dict:
        """Deterministic digest of all replayed state, for restart checks."""
        with self._lock:
            return {
                "messages": {
                    m.id: [m.text, m.language, m.source.value]
                    for m in self._messages.values()
                },
                "assignment": {
                    mid: self._clusters.cluster_of(mid) for mid in self._messages
                },
                "reviews": {r.id: r.to_record() for r in self._reviews.values()},
                "queued": [vars(q) for q in self._queued],
                "counters": [
                    self._next_message, self._next_review,
                    self._clusters.next_cluster_id,
                ],
            }


class AuthError(ServiceError):
    status = 401
    code = "unauthorized"


def create_app(service: MatchingService, auth_token: Optional[str] = None):
    """HTTP facade over a MatchingService.

    When a bearer token is configured (argument, else CLAIMMATCH_TOKEN in
    the environment), every endpoint except the health probe requires it.
    All errors render as {error, detail} with a conventional status code.
    """
    from fastapi import Depends, FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    token = auth_token if auth_token is not None else os.environ.get("CLAIMMATCH_TOKEN", "")

    class SubmitBody(BaseModel):
        text: str
        language: str = "und"
        source: str = Source.TIPLINE.value
        preview: bool = False

    class VerdictBody(BaseModel):
        verdict: str
        reviewer: Optional[str] = None

    class MatchBody(BaseModel):
        id_a: str
        id_b: str
        reviewer: Optional[str] = None

    def require_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise AuthError("missing or invalid bearer token")

    app = FastAPI(title="claim matching service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.code, "detail": exc.detail}
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(request: Request, exc: RequestValidationError):
        detail = "; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        )
        return JSONResponse(
            status_code=400, content={"error": "invalid_request", "detail": detail}
        )

    guarded = [Depends(require_auth)]

    @app.post("/v1/messages", dependencies=guarded)
    def submit_message(body: SubmitBody):
        if body.preview:
            return service.preview_message(body.text, body.language)
        return service.submit_message(body.text, body.language, body.source).to_record()

    @app.get("/v1/reviews", dependencies=guarded)
    def list_reviews(state: str = "pending"):
        out = []
        for item in service.list_reviews(state):
            rec = item.to_record()
            rec["query_text"] = service.get_message(item.query_id).text
            rec["candidate_text"] = service.get_message(item.candidate_id).text
            out.append(rec)
        return {"reviews": out}

    @app.post("/v1/reviews/{review_id}", dependencies=guarded)
    def resolve_review(review_id: str, body: VerdictBody):
        return service.resolve_review(review_id, body.verdict, body.reviewer).to_record()

    @app.post("/v1/matches", dependencies=guarded)
    def add_match(body: MatchBody):
        cluster_id = service.add_manual_match(body.id_a, body.id_b, body.reviewer)
        return {"cluster_id": cluster_id}

    @app.get("/v1/clusters", dependencies=guarded)
    def list_clusters(min_size: int = 1):
        if min_size < 1:
            raise InvalidRequestError("min_size must be >= 1")
        return {
            "clusters": [
                {"id": cid, "size": size} for cid, size in service.list_clusters(min_size)
            ]
        }

    @app.get("/v1/clusters/{cluster_id}", dependencies=guarded)
    def cluster_detail(cluster_id: int):
        return service.cluster_detail(cluster_id)

    @app.get("/v1/health")
    def health():
        return service.health()

    return app
