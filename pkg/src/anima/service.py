"""HTTP session service.

The network boundary: session lifecycle, message submission with streamed
multi-message turns, transcript and trace export. Turns stream as
server-sent events because the interaction model is strictly one request to
many ordered responses; every frame is ``event: <name>`` plus one JSON data
line. Handlers are stateless apart from the engine's session registry;
per-session serialization is the orchestrator's job.
"""

from __future__ import annotations

import json
import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from .conversation import messages_from_jsonl, render_transcript_text
from .errors import SessionClosed, TurnFailed
from .orchestrator import Engine
from .trace import EventKind

logger = logging.getLogger(__name__)

# Kinds forwarded when ?trace=summary: loop decisions plus the state-card
# updates a client needs to stay current.
SUMMARY_KINDS = {EventKind.LOOP_DECISION, EventKind.OTHER_STATE,
                 EventKind.SELF_STATE_UPDATED}

MESSAGE_KINDS = {EventKind.QUICK_EMITTED, EventKind.ANALYTICAL_EMITTED}


class CreateSessionBody(BaseModel):
    persona_id: str
    session_id: str | None = None


class PostMessageBody(BaseModel):
    text: str


def sse_frame(event: str, data: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(data, separators=(',', ':'))}\n\n"


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="anima", version="0.1.0")
    app.state.engine = engine
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.post("/v1/sessions", status_code=201)
    async def create_session(body: CreateSessionBody):
        try:
            session = engine.create_session(body.persona_id, session_id=body.session_id)
        except KeyError:
            return JSONResponse({"error": "unknown_persona",
                                 "persona_id": body.persona_id}, status_code=404)
        return session.to_dict()

    @app.get("/v1/sessions")
    async def list_sessions():
        return [s.to_dict() for s in engine.list_sessions()]

    @app.post("/v1/sessions/{session_id}/messages")
    async def post_message(session_id: str, body: PostMessageBody, request: Request):
        trace_mode = request.query_params.get("trace", "summary")
        if trace_mode not in ("none", "summary", "full"):
            return JSONResponse({"error": "bad_trace_mode"}, status_code=400)
        session = engine.get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown_session"}, status_code=404)
        if session.status.value == "concluded":
            return JSONResponse({"error": "session_concluded"}, status_code=409)
        runtime = engine.runtime(session_id)
        if runtime.pending >= engine.config.max_backlog:
            return JSONResponse({"error": "backlog_exceeded"}, status_code=429)

        stream = engine.stream_turn(session_id, body.text)

        async def frames():
            try:
                async for event in stream:
                    if event.kind in MESSAGE_KINDS:
                        yield sse_frame("message", event.payload["message"])
                    if trace_mode == "full" or (
                            trace_mode == "summary" and event.kind in SUMMARY_KINDS):
                        yield sse_frame("trace", event.to_dict())
                result = stream.result
                assert result is not None
                yield sse_frame("turn_end", result.to_summary())
            except SessionClosed:
                yield sse_frame("error", {"error": "session_concluded"})
            except TurnFailed as exc:
                yield sse_frame("error", {"error": "turn_failed", "detail": str(exc)})
            except Exception as exc:
                logger.exception("turn stream failed")
                yield sse_frame("error", {"error": "internal", "detail": str(exc)})

        return StreamingResponse(frames(), media_type="text/event-stream")

    @app.get("/v1/sessions/{session_id}/transcript")
    async def get_transcript(session_id: str, format: str = "jsonl"):
        if engine.get_session(session_id) is None:
            return JSONResponse({"error": "unknown_session"}, status_code=404)
        raw = engine.storage.read_transcript(session_id)
        if format == "text":
            messages = messages_from_jsonl(raw)
            persona = engine.get_session(session_id).persona_id
            return PlainTextResponse(render_transcript_text(messages, persona))
        return PlainTextResponse(raw, media_type="application/jsonl")

    @app.get("/v1/sessions/{session_id}/trace")
    async def get_trace(session_id: str):
        if engine.get_session(session_id) is None:
            return JSONResponse({"error": "unknown_session"}, status_code=404)
        return PlainTextResponse(engine.storage.read_trace(session_id),
                                 media_type="application/jsonl")

    return app
