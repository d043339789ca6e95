"""JSON-over-HTTP session service for the interactive teach/correct loop.

Each session owns one learner. The generic model bootstraps lazily from the
first ``bootstrap_views`` taught views (there is no offline pool in an
interactive setting) or loads from a prebuilt model bundle. Every action is
appended to an event log rich enough to replay the whole session against a
fresh service.
"""

from __future__ import annotations

import base64
import math
import threading
import uuid
from typing import Any

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .cloud import CloudFormatError, load_cloud_bytes
from .codebook import load_dictionary
from .learner import GenericModel, LearningAgent, bootstrap_generic_model
from .memory import ClassificationResult
from .params import Params
from .spin import UnusableObjectError, describe_object_matrix
from .topics import load_model

UNKNOWN = "Unknown"
ECHO_POINT_CAP = 2048


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: Any = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


class SessionConfig(BaseModel):
    voxel_size: float = 0.02
    image_width: int = 8
    support_length: float = 0.09
    generic_words: int = 90
    topics: int = 70
    specific_words: int = 70
    alpha: float = 1.0
    beta: float = 0.1
    gibbs_sweeps: int = 50
    unknown_threshold: float = 0.35
    seed: int = 0
    bootstrap_views: int = Field(default=10, ge=1)
    model_path: str | None = None
    dictionary_path: str | None = None

    def to_params(self) -> Params:
        return Params(
            voxel_size=self.voxel_size, image_width=self.image_width,
            support_length=self.support_length, generic_words=self.generic_words,
            topics=self.topics, specific_words=self.specific_words,
            alpha=self.alpha, beta=self.beta, gibbs_sweeps=self.gibbs_sweeps,
            unknown_threshold=self.unknown_threshold, seed=self.seed,
        )


class Session:
    """One learner plus its lock, event log and pending (pre-bootstrap) views."""

    def __init__(self, sid: str, config: SessionConfig):
        self.id = sid
        self.config = config
        self.params = config.to_params()
        self.lock = threading.RLock()
        self.events: list[dict] = []
        self.agent: LearningAgent | None = None
        self.pending: list[tuple[str, np.ndarray]] = []  # (category, features)
        self.objects: dict[str, dict] = {}  # classify ref -> cached view
        self.n_classified = 0
        self.n_corrected = 0

        if config.model_path:
            generic = self._load_prebuilt(config)
            self.agent = LearningAgent(generic, self.params)

    @staticmethod
    def _load_prebuilt(config: SessionConfig) -> GenericModel:
        try:
            model = load_model(config.model_path)
        except (OSError, ValueError) as exc:
            raise ServiceError(400, "bad_model", f"cannot load model: {exc}")
        if config.dictionary_path:
            dictionary = load_dictionary(config.dictionary_path)
        else:
            raise ServiceError(400, "bad_model",
                               "model_path requires dictionary_path")
        if model.topics is None:
            model.synthesize_topics(dictionary)
        return GenericModel(dictionary, model)

    # -- helpers -------------------------------------------------------------

    def log(self, kind: str, **payload) -> dict:
        event = {"seq": len(self.events), "kind": kind, **payload}
        self.events.append(event)
        return event

    @property
    def bootstrapped(self) -> bool:
        return self.agent is not None

    def pending_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for name, _ in self.pending:
            counts[name] = counts.get(name, 0) + 1
        return counts

    def category_counts(self) -> dict[str, int]:
        if self.bootstrapped:
            return self.agent.store.instance_counts()
        return self.pending_counts()

    def teach_views(self, name: str, views: list[np.ndarray]) -> None:
        known = set(self.category_counts())
        if name in known:
            raise ServiceError(409, "duplicate_category",
                               f"category {name!r} already exists")
        if not views:
            raise ServiceError(400, "empty_teach", "teach needs at least one view")
        if self.bootstrapped:
            self.agent.teach(name, views)
            return
        self.pending.extend((name, v) for v in views)
        if len(self.pending) >= self.config.bootstrap_views:
            self._bootstrap()

    def _bootstrap(self) -> None:
        feature_sets = [v for _, v in self.pending]
        generic = bootstrap_generic_model(feature_sets, self.params,
                                          pool_fraction=1.0)
        self.agent = LearningAgent(generic, self.params)
        grouped: dict[str, list[np.ndarray]] = {}
        for name, v in self.pending:
            grouped.setdefault(name, []).append(v)
        for name, views in grouped.items():
            self.agent.teach(name, views)
        self.pending.clear()

    def classify_view(self, features: np.ndarray) -> ClassificationResult:
        if not self.bootstrapped:
            return ClassificationResult(None, {}, math.inf)
        return self.agent.classify(features)

    def accuracy(self) -> float | None:
        """Share of classifications the user let stand (corrections = wrong)."""
        if self.n_classified == 0:
            return None
        return (self.n_classified - self.n_corrected) / self.n_classified


SESSIONS: dict[str, Session] = {}
_REGISTRY_LOCK = threading.Lock()


def _session(sid: str) -> Session:
    session = SESSIONS.get(sid)
    if session is None:
        raise ServiceError(404, "unknown_session", f"no session {sid!r}")
    return session


def _decode_cloud(blob: bytes, origin: str):
    try:
        return load_cloud_bytes(blob, origin)
    except CloudFormatError as exc:
        raise ServiceError(400, "bad_cloud", str(exc))


def _features_or_422(session: Session, cloud) -> np.ndarray:
    try:
        return describe_object_matrix(cloud, session.params)
    except (UnusableObjectError, ValueError) as exc:
        raise ServiceError(422, "unusable_cloud", str(exc))


def _echo_points(cloud) -> list[list[float]]:
    pts = cloud.points
    if len(pts) > ECHO_POINT_CAP:
        stride = int(np.ceil(len(pts) / ECHO_POINT_CAP))
        pts = pts[::stride]
    return [[round(float(x), 6) for x in p] for p in pts]


def _result_payload(result: ClassificationResult) -> dict:
    ranked = [{"category": name, "ocd": dist} for name, dist in result.ranked]
    return {
        "label": result.label if result.label is not None else UNKNOWN,
        "per_category_ocd": ranked,
        "margin": None if math.isinf(result.margin) else result.margin,
    }


class CloudUpload(BaseModel):
    filename: str = "upload"
    content_b64: str

    def decode(self) -> bytes:
        return base64.b64decode(self.content_b64)


class TeachRequest(BaseModel):
    name: str
    clouds: list[CloudUpload]


class CorrectRequest(BaseModel):
    object_ref: str
    name: str


class CreateSessionRequest(BaseModel):
    config: SessionConfig = Field(default_factory=SessionConfig)


class ImportRequest(BaseModel):
    config: SessionConfig
    events: list[dict]


def create_app() -> FastAPI:
    app = FastAPI(title="ot3d teaching service")

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={
            "code": exc.code, "message": exc.message, "detail": exc.detail})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={
            "code": "invalid_request", "message": "request validation failed",
            "detail": jsonable_encoder(exc.errors())})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        sid = uuid.uuid4().hex[:12]
        try:
            session = Session(sid, req.config)
        except ValueError as exc:
            raise ServiceError(400, "bad_config", str(exc))
        with _REGISTRY_LOCK:
            SESSIONS[sid] = session
        session.log("create", config=req.config.model_dump())
        return {"session_id": sid, "config": req.config.model_dump()}

    def _teach(session: Session, name: str, uploads: list[tuple[str, bytes]]):
        views = []
        for filename, blob in uploads:
            cloud = _decode_cloud(blob, filename)
            views.append(_features_or_422(session, cloud))
        session.teach_views(name, views)
        session.log("teach", name=name, clouds=[
            {"filename": fn, "content_b64": base64.b64encode(blob).decode()}
            for fn, blob in uploads])
        counts = session.category_counts()
        return {"name": name, "instances": counts[name],
                "known_categories": len(counts),
                "bootstrapped": session.bootstrapped}

    @app.post("/sessions/{sid}/teach")
    async def teach_endpoint(sid: str, request: Request,
                             name: str | None = Query(default=None)):
        session = _session(sid)
        content_type = request.headers.get("content-type", "")
        # read the body before taking the lock; the lock guards mutation only
        if content_type.startswith("application/octet-stream"):
            if not name:
                raise ServiceError(400, "missing_name",
                                   "octet-stream teach needs ?name=")
            uploads = [("upload", await request.body())]
        else:
            req = TeachRequest.model_validate(await request.json())
            name = req.name
            uploads = [(c.filename, c.decode()) for c in req.clouds]
        with session.lock:
            return _teach(session, name, uploads)

    @app.post("/sessions/{sid}/classify")
    async def classify_endpoint(sid: str, request: Request):
        session = _session(sid)
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/octet-stream"):
            blob = await request.body()
            filename = "upload"
        else:
            upload = CloudUpload.model_validate(await request.json())
            blob, filename = upload.decode(), upload.filename
        with session.lock:
            cloud = _decode_cloud(blob, filename)
            features = _features_or_422(session, cloud)
            result = session.classify_view(features)
            ref = uuid.uuid4().hex[:10]
            session.objects[ref] = {"features": features}
            session.n_classified += 1
            payload = _result_payload(result)
            session.log("classify", object_ref=ref, filename=filename,
                        content_b64=base64.b64encode(blob).decode(),
                        result=payload)
            return {**payload, "object_ref": ref, "points": _echo_points(cloud)}

    @app.post("/sessions/{sid}/correct")
    def correct_endpoint(sid: str, req: CorrectRequest):
        session = _session(sid)
        with session.lock:
            cached = session.objects.get(req.object_ref)
            if cached is None:
                raise ServiceError(410, "stale_reference",
                                   f"no cached object {req.object_ref!r}")
            if not session.bootstrapped or req.name not in session.agent.store.categories:
                raise ServiceError(404, "unknown_category",
                                   f"category {req.name!r} is not known")
            session.agent.correct(req.name, cached["features"])
            session.n_corrected += 1
            session.log("correct", object_ref=req.object_ref, name=req.name)
            return {"name": req.name,
                    "instances": session.category_counts()[req.name]}

    @app.post("/sessions/{sid}/maintenance/refresh-topics")
    def refresh_endpoint(sid: str, sweeps: int | None = Query(default=None)):
        session = _session(sid)
        with session.lock:
            if session.bootstrapped:
                session.agent.refresh_topics(sweeps)
            session.log("refresh-topics", sweeps=sweeps)
            return {"ok": True, "bootstrapped": session.bootstrapped}

    @app.post("/sessions/{sid}/maintenance/rebuild-dictionary")
    def rebuild_endpoint(sid: str):
        session = _session(sid)
        with session.lock:
            if session.bootstrapped:
                session.agent.rebuild_dictionary()
            session.log("rebuild-dictionary")
            return {"ok": True, "bootstrapped": session.bootstrapped}

    @app.get("/sessions/{sid}/state")
    def state_endpoint(sid: str):
        session = _session(sid)
        with session.lock:
            counts = session.category_counts()
            return {
                "session_id": session.id,
                "bootstrapped": session.bootstrapped,
                "categories": [{"name": n, "instances": c}
                               for n, c in counts.items()],
                "accuracy": session.accuracy(),
                "events": len(session.events),
            }

    @app.get("/sessions/{sid}/events")
    def events_endpoint(sid: str, full: bool = Query(default=False)):
        session = _session(sid)
        with session.lock:
            if full:
                return {"events": session.events}
            slim = []
            for e in session.events:
                slim.append({k: v for k, v in e.items()
                             if k not in ("content_b64", "clouds")})
            return {"events": slim}

    @app.get("/sessions/{sid}/export")
    def export_endpoint(sid: str):
        session = _session(sid)
        with session.lock:
            return {"config": session.config.model_dump(),
                    "events": session.events}

    @app.post("/sessions/import")
    def import_endpoint(req: ImportRequest):
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, req.config)
        with _REGISTRY_LOCK:
            SESSIONS[sid] = session
        session.log("create", config=req.config.model_dump())
        replayed = replay_events(session, req.events)
        return {"session_id": sid, "replayed": replayed}

    return app


def replay_events(session: Session, events: list[dict]) -> list[dict]:
    """Re-apply a logged session; classify events report replayed vs original."""
    ref_map: dict[str, str] = {}
    outcomes = []
    for event in events:
        kind = event.get("kind")
        if kind == "teach":
            uploads = [(c["filename"], base64.b64decode(c["content_b64"]))
                       for c in event["clouds"]]
            views = []
            for fn, blob in uploads:
                views.append(_features_or_422(session, _decode_cloud(blob, fn)))
            session.teach_views(event["name"], views)
            session.log("teach", name=event["name"], clouds=event["clouds"])
        elif kind == "classify":
            blob = base64.b64decode(event["content_b64"])
            cloud = _decode_cloud(blob, event.get("filename", "replay"))
            features = _features_or_422(session, cloud)
            result = session.classify_view(features)
            new_ref = uuid.uuid4().hex[:10]
            ref_map[event["object_ref"]] = new_ref
            session.objects[new_ref] = {"features": features}
            session.n_classified += 1
            payload = _result_payload(result)
            session.log("classify", object_ref=new_ref,
                        filename=event.get("filename", "replay"),
                        content_b64=event["content_b64"], result=payload)
            original = event.get("result", {})
            outcomes.append({
                "seq": event.get("seq"),
                "label": payload["label"],
                "original_label": original.get("label"),
                "matches": payload["label"] == original.get("label"),
            })
        elif kind == "correct":
            ref = ref_map.get(event["object_ref"])
            cached = session.objects.get(ref) if ref else None
            if cached is None:
                raise ServiceError(410, "stale_reference",
                                   "correct event references an unreplayed object")
            session.agent.correct(event["name"], cached["features"])
            session.n_corrected += 1
            session.log("correct", object_ref=ref, name=event["name"])
        elif kind == "refresh-topics":
            if session.bootstrapped:
                session.agent.refresh_topics(event.get("sweeps"))
            session.log("refresh-topics", sweeps=event.get("sweeps"))
        elif kind == "rebuild-dictionary":
            if session.bootstrapped:
                session.agent.rebuild_dictionary()
            session.log("rebuild-dictionary")
        # "create" events carry no state beyond the config already applied
    return outcomes


app = create_app()
