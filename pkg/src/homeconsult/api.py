"""HTTP surface over the session engine.

POST /sessions                  create a session (body picks the preset)
POST /sessions/{id}/messages    run one consultation turn
GET  /sessions/{id}/memory      four-layer memory snapshot
GET  /sessions/{id}/audit/{n}   stage-by-stage audit for turn n
GET  /health

Sessions are in-process state; the graph, index, and router are shared
and immutable.  A second message to the same session while one is in
flight simply queues on the session lock.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .orchestrator import Engine, SessionState, TurnError


class CreateSessionBody(BaseModel):
    preset: str = "full"
    clock: Optional[str] = Field(
        default=None, description="simulated | wall (default: engine setting)"
    )


class MessageBody(BaseModel):
    text: str = Field(min_length=1, max_length=4000)


def _evidence_view(result) -> list[dict]:
    out = []
    for i, item in enumerate(result.bundle.items):
        out.append(
            {
                # zero-based, matching the claims' evidence_ref strings
                "ref": f"i{i}",
                "property_id": item.property_id,
                "name": item.fields.get("name", ""),
                "dense_score": item.dense_score,
                "fields": item.fields,
                "graph_facts": [f.to_dict() for f in item.graph_facts],
            }
        )
    return out


def create_app(engine: Engine) -> FastAPI:
    from . import __version__

    app = FastAPI(title="homeconsult", version=__version__)

    def get_session(session_id: str) -> SessionState:
        try:
            return engine.session(session_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "version": __version__,
            "listings": len(engine.kg.listings()),
            "sessions": len(engine.sessions),
            "router": engine.router is not None,
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        if body.clock not in (None, "simulated", "wall"):
            raise HTTPException(status_code=400, detail=f"unknown clock mode {body.clock!r}")
        try:
            s = engine.create_session(body.preset, clock_mode=body.clock)
        except KeyError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"session_id": s.session_id, "variant": s.variant.to_dict()}

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict:
        s = get_session(session_id)
        try:
            result = engine.run_turn(s, body.text)
        except TurnError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from None
        return {
            "session_id": s.session_id,
            "turn": result.turn_index,
            "response": {
                "text": result.response.text,
                "display": result.display,
                "claims": [c.to_dict() for c in result.response.claims],
                "recommended_ids": list(result.response.recommended_ids),
                "task": result.task,
            },
            "report": result.report.to_dict(),
            "badge": result.badge,
            "route": result.routing.route,
            "cycles": result.cycles,
            "actions": list(result.actions),
            "evidence": _evidence_view(result),
            "timings_ms": result.timings,
        }

    @app.get("/sessions/{session_id}/memory")
    def get_memory(session_id: str) -> dict:
        s = get_session(session_id)
        return {
            "session_id": s.session_id,
            "turns": s.turn_counter,
            "memory": s.memory.snapshot(),
        }

    @app.get("/sessions/{session_id}/audit/{turn}")
    def get_audit(session_id: str, turn: int) -> dict:
        s = get_session(session_id)
        if turn < 0 or turn >= s.turn_counter:
            raise HTTPException(
                status_code=404,
                detail=f"session {session_id} has no turn {turn}",
            )
        return {
            "session_id": s.session_id,
            "turn": turn,
            "records": s.audit_for_turn(turn),
        }

    return app
