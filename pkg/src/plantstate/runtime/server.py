"""HTTP + server-sent-events API over bundles and live sessions.

The app holds one loaded bundle (immutable, shared by all sessions) and a
registry of live sessions, each driven by its own tick-loop thread. All
JSON field names match the bundle/session-log schemas.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from plantstate.analytics import CompositeMatcher
from plantstate.core import (
    MachineStatus,
    MissingParameterError,
    ModelBundle,
    canonical_json,
    sensor_ids,
    setting_ids,
)
from plantstate.runtime.plant import PlantSpec
from plantstate.runtime.session import (
    Session,
    SessionClosedError,
    SessionConfig,
    SessionRunner,
)

_HEARTBEAT_SECONDS = 5.0


class SessionRequest(BaseModel):
    mode: str
    tickIntervalMs: int = 10_000
    speedFactor: float = 1.0
    seed: int = 0
    plantSpec: Optional[dict] = None
    replayLogPath: Optional[str] = None
    batchId: str = "live"
    materialType: Optional[str] = None
    decisionThreshold: float = 0.5
    recommendEachTick: bool = False
    maxTicks: Optional[int] = None


class SettingsRequest(BaseModel):
    values: dict[str, float]


class QualityRequest(BaseModel):
    measurement: float


class WhatIfRequest(BaseModel):
    status: dict = Field(description="{'sensors': {...}, 'settings': {...}}")
    candidateSettings: dict[str, float]


class _Registry:
    def __init__(self):
        self.sessions: dict[str, tuple[Session, SessionRunner]] = {}
        self.lock = threading.Lock()

    def add(self, session: Session, runner: SessionRunner) -> str:
        sid = uuid.uuid4().hex[:12]
        with self.lock:
            self.sessions[sid] = (session, runner)
        return sid

    def get(self, sid: str) -> tuple[Session, SessionRunner]:
        with self.lock:
            if sid not in self.sessions:
                raise HTTPException(status_code=404, detail="unknown session")
            return self.sessions[sid]

    def remove(self, sid: str) -> None:
        with self.lock:
            self.sessions.pop(sid, None)


def create_app(bundle: ModelBundle, static_dir=None,
               log_dir=None) -> FastAPI:
    app = FastAPI(title="plantstate runtime", version="0.1.0")
    matcher = CompositeMatcher.from_bundle(bundle)
    registry = _Registry()
    app.state.bundle = bundle
    app.state.registry = registry

    @app.get("/api/model")
    def model_summary() -> dict:
        supported = sum(1 for c in bundle.composites if c.supported)
        return {
            "formatVersion": bundle.format_version,
            "sensorCount": len(sensor_ids(bundle.manifest)),
            "settingCount": len(setting_ids(bundle.manifest)),
            "statusStateCount": len(bundle.status_states),
            "settingsStateCount": len(bundle.settings_states),
            "compositeCount": len(bundle.composites),
            "supportedCompositeCount": supported,
            "minLeafSize": bundle.min_leaf_size,
            "trainingWindow": list(bundle.training_window),
            "labels": list(bundle.quality_config.labels),
            "targetLabel": bundle.quality_config.target_label,
            "datasetFingerprint": bundle.dataset_fingerprint,
            "parameters": [p.to_dict() for p in bundle.manifest],
        }

    @app.post("/api/session")
    def create_session(req: SessionRequest) -> dict:
        try:
            plant = None
            if req.plantSpec is not None:
                plant = PlantSpec.from_dict(req.plantSpec)
            config = SessionConfig(
                mode=req.mode,
                tick_interval_ms=req.tickIntervalMs,
                speed_factor=req.speedFactor,
                seed=req.seed,
                plant=plant,
                replay_log_path=req.replayLogPath,
                batch_id=req.batchId,
                material_type=req.materialType,
                decision_threshold=req.decisionThreshold,
                recommend_each_tick=req.recommendEachTick,
                max_ticks=req.maxTicks,
            )
            session = Session(config, bundle)
        except (ValueError, KeyError, FileNotFoundError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        runner = SessionRunner(session)
        sid = registry.add(session, runner)
        runner.start()
        return {"sessionId": sid, "mode": req.mode}

    @app.get("/api/session/{sid}")
    def latest(sid: str) -> dict:
        session, _ = registry.get(sid)
        event = session.latest_event
        return {"sessionId": sid,
                "closed": session.closed,
                "tick": None if event is None else event.to_dict()}

    @app.get("/api/session/{sid}/events")
    def events(sid: str) -> StreamingResponse:
        session, _ = registry.get(sid)
        q = session.subscribe()

        def stream():
            # Late subscribers first get the latest tick so the view can
            # render immediately.
            latest_event = session.latest_event
            if latest_event is not None:
                yield f"data: {canonical_json(latest_event.to_dict())}\n\n"
            try:
                while True:
                    try:
                        event = q.get(timeout=_HEARTBEAT_SECONDS)
                    except queue.Empty:
                        if session.closed:
                            break
                        yield ": keepalive\n\n"
                        continue
                    if event is None:
                        break
                    yield f"data: {canonical_json(event.to_dict())}\n\n"
            finally:
                session.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    @app.post("/api/session/{sid}/settings")
    def apply_settings(sid: str, req: SettingsRequest) -> dict:
        session, _ = registry.get(sid)
        try:
            return session.apply_settings(req.values)
        except SessionClosedError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.post("/api/session/{sid}/quality")
    def record_quality(sid: str, req: QualityRequest) -> dict:
        session, _ = registry.get(sid)
        try:
            label = session.record_quality_sample(req.measurement)
        except SessionClosedError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"runningLabel": label}

    @app.get("/api/session/{sid}/recommendation")
    def recommendation(sid: str) -> dict:
        session, _ = registry.get(sid)
        try:
            rec = session.recommendation()
        except ValueError as exc:
            # Out-of-regime statuses are a condition, not a server fault.
            raise HTTPException(status_code=409, detail=str(exc))
        return rec.to_dict()

    @app.post("/api/whatif")
    def what_if(req: WhatIfRequest) -> dict:
        status = MachineStatus(
            sensors={k: float(v) for k, v in req.status.get("sensors", {}).items()},
            settings={k: float(v) for k, v in req.status.get("settings", {}).items()},
        )
        from plantstate.runtime.session import whatif as run_whatif

        try:
            prediction = run_whatif(matcher, status, req.candidateSettings)
        except (MissingParameterError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return prediction.to_dict()

    @app.delete("/api/session/{sid}")
    def close_session(sid: str) -> dict:
        session, runner = registry.get(sid)
        runner.stop()
        try:
            summary = session.close()
        except SessionClosedError:
            summary = {"ticks": session.tick_count}
        log_path = None
        if log_dir is not None:
            Path(log_dir).mkdir(parents=True, exist_ok=True)
            log_path = str(Path(log_dir) / f"session-{sid}.jsonl")
            session.log.dump(log_path)
        registry.remove(sid)
        return {"sessionId": sid, "logPath": log_path, **summary}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")

    return app
