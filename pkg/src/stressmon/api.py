"""HTTP+JSON surface over ServiceCore.

Endpoints (all timestamps epoch-ms UTC):
  POST /api/v1/samples                     ingest one PPG window
  GET  /api/v1/ema/pending?subject=ID      open prompts, oldest first
  POST /api/v1/ema/response                submit one EMA answer
  GET  /api/v1/dataset/export?subject=&kind=labeled|unlabeled   CSV
  GET  /api/v1/stats?subject=              counts and region summary
  GET  /healthz
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel, Field

from .errors import (DuplicateLabelError, DuplicateResponseError, ExpiredPromptError,
                     InvalidLabelError, InvalidWindowError, NeverQueriedError,
                     UnknownPromptError, UnknownSampleError, UnknownSubjectError)
from .query import ACTIVITIES, STRESS_LEVELS
from .service import Prompt, ServiceConfig, ServiceCore
from .windows import RawWindow


class SampleBody(BaseModel):
    subject_id: str = Field(min_length=1)
    start_time_ms: int
    sample_rate_hz: float = 20.0
    ppg: list[float]
    motion: list[list[float]] | None = None


class ResponseBody(BaseModel):
    prompt_id: str
    stress_level: int = Field(ge=0, le=len(STRESS_LEVELS) - 1)
    activity: str


def _prompt_json(prompt: Prompt, now_ms: int) -> dict:
    return {"prompt_id": prompt.prompt_id,
            "subject_id": prompt.subject_id,
            "sample_id": prompt.sample_id,
            "created_at_ms": prompt.created_at_ms,
            "expires_at_ms": prompt.expires_at_ms,
            "remaining_ms": max(0, prompt.expires_at_ms - now_ms)}


def create_app(core: ServiceCore | None = None,
               config: ServiceConfig | None = None) -> FastAPI:
    if core is None:
        core = ServiceCore(config or ServiceConfig())
    app = FastAPI(title="stressmon ingest service", version="0.1.0")
    app.state.core = core

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/v1/samples")
    def post_sample(body: SampleBody):
        window = RawWindow(subject_id=body.subject_id,
                           start_time_ms=body.start_time_ms,
                           sample_rate_hz=body.sample_rate_hz,
                           ppg=np.array(body.ppg, dtype=float),
                           motion=np.array(body.motion, dtype=float)
                           if body.motion else None)
        try:
            result = core.ingest(window)
        except InvalidWindowError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        decision = result.decision
        return {
            "accepted": result.accepted,
            "duplicate": result.duplicate,
            "sample_id": result.sample_id,
            "usable": result.usable,
            "elapsed_ms": result.elapsed_ms,
            "features": result.features.as_array().tolist()
            if result.features else None,
            "decision": None if decision is None else {
                "phase": decision.phase,
                "trigger": decision.trigger,
                "probability": decision.probability,
                "neighbor_count": decision.neighbor_count,
            },
            "prompt": _prompt_json(result.prompt, body.start_time_ms)
            if result.prompt else None,
        }

    @app.get("/api/v1/ema/pending")
    def pending(subject: str = Query(min_length=1)):
        try:
            prompts = core.get_pending(subject)
        except UnknownSubjectError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        now = core.stats(subject)["subjects"][subject]["stream_time_ms"]
        return {"subject": subject, "now_ms": now,
                "prompts": [_prompt_json(p, now) for p in prompts]}

    @app.post("/api/v1/ema/response")
    def respond(body: ResponseBody):
        if body.activity not in ACTIVITIES:
            raise HTTPException(status_code=422,
                                detail=f"activity must be one of {list(ACTIVITIES)}")
        try:
            prompt = core.submit_response(body.prompt_id, body.stress_level,
                                          body.activity)
        except UnknownPromptError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (DuplicateResponseError, DuplicateLabelError) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ExpiredPromptError as exc:
            raise HTTPException(status_code=410, detail=str(exc))
        except (UnknownSampleError, NeverQueriedError, InvalidLabelError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"recorded": True, "prompt_id": prompt.prompt_id,
                "sample_id": prompt.sample_id,
                "stress_level": body.stress_level,
                "stress_label": STRESS_LEVELS[body.stress_level],
                "activity": body.activity,
                "responded_at_ms": prompt.responded_at_ms}

    @app.get("/api/v1/dataset/export")
    def export(kind: str = Query(pattern="^(labeled|unlabeled)$"),
               subject: str | None = None):
        try:
            csv_text = core.export_csv(kind, subject)
        except UnknownSubjectError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=csv_text, media_type="text/csv")

    @app.get("/api/v1/stats")
    def stats(subject: str | None = None):
        try:
            return core.stats(subject)
        except UnknownSubjectError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    return app
