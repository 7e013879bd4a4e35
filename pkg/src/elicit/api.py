"""HTTP API for the validation UI (versioned JSON under /api/v1).

Reads are lock-free; all mutations are serialised through one lock around
the session writer, so the append-only log property survives concurrent UI
clients. Long labeling runs happen out-of-band (see the run-lfs command),
never inside a request handler.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel

from .corpus import context_window
from .errors import InvalidRecord, SessionClosed, StaleItem, ValidationError
from .schema import DeferralPolicy
from .session import ItemView, Session, ValidationRecord

API_PREFIX = "/api/v1"


class ValidationIn(BaseModel):
    record_id: str
    doc_id: str
    variable_id: str
    group_id: str
    decision: str
    annotator_id: str
    wall_time_ms: int = 0
    timestamp: float = 0.0
    value: str | None = None


class DeferralIn(BaseModel):
    mode: str
    q: float | None = None
    tau: float | None = None


def item_payload(view: ItemView | None) -> dict:
    if view is None:
        return {"done": True}
    return {
        "done": False,
        "doc_id": view.doc_id,
        "variable_id": view.variable_id,
        "display_name": view.display_name,
        "label_values": list(view.label_values),
        "negative_value": view.negative_value,
        "lf_total": view.lf_total,
        "groups": [
            {
                "group_id": g.group_id,
                "value": g.value,
                "confidence": g.confidence,
                "agreement": g.agreement,
                "snippet": g.snippet,
                "span": {"start": g.span_start, "end": g.span_end},
            }
            for g in view.groups
        ],
    }


def create_app(session: Session) -> FastAPI:
    app = FastAPI(title="elicit", version="1")
    write_lock = threading.Lock()

    @app.get(f"{API_PREFIX}/progress")
    def progress():
        return session.progress()

    @app.get(f"{API_PREFIX}/items/next")
    def next_item(annotator_id: str = Query("default")):
        try:
            return item_payload(session.next_item(annotator_id))
        except SessionClosed as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.get(f"{API_PREFIX}/groups/{{group_id}}/context")
    def group_context(group_id: str, radius: int = Query(500, ge=0)):
        group = session.find_group(group_id)
        if group is None:
            raise HTTPException(status_code=404, detail=f"unknown group {group_id!r}")
        excerpt, window = context_window(session.corpus, group.merged_span, radius=radius)
        highlights = [
            {"start": m.span.start - window.start, "end": m.span.end - window.start}
            for m in group.members
        ]
        return {
            "group_id": group_id,
            "doc_id": window.doc_id,
            "excerpt": excerpt,
            "span": {"start": window.start, "end": window.end},
            "highlights": highlights,
        }

    @app.post(f"{API_PREFIX}/validations", status_code=201)
    def submit(body: ValidationIn):
        record = ValidationRecord(
            record_id=body.record_id,
            doc_id=body.doc_id,
            variable_id=body.variable_id,
            group_id=body.group_id,
            decision=body.decision,
            annotator_id=body.annotator_id,
            wall_time_ms=body.wall_time_ms,
            timestamp=body.timestamp,
            value=body.value,
        )
        with write_lock:
            try:
                logged = session.submit_validation(record)
            except StaleItem as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except (InvalidRecord, SessionClosed) as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"record": logged.to_dict()}

    @app.get(f"{API_PREFIX}/alerts")
    def alerts():
        return {
            "alerts": [
                {"doc_id": a.doc_id, "variable_id": a.variable_id, "group_id": a.group_id}
                for a in session.state.alerts
            ]
        }

    @app.post(f"{API_PREFIX}/deferral")
    def apply_deferral(body: DeferralIn):
        try:
            policy = None if body.mode == "none" else DeferralPolicy(
                mode=body.mode, q=body.q, tau=body.tau
            )
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        with write_lock:
            try:
                human, auto = session.apply_deferral(policy)
            except SessionClosed as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"human": len(human), "auto": len(auto)}

    @app.get(f"{API_PREFIX}/export")
    def export(format: str = Query("csv")):
        try:
            payload = session.export_dataset(format=format)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        media = "text/csv" if format == "csv" else "application/jsonl"
        return Response(content=payload, media_type=media)

    return app


def serve(session: Session, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the API until interrupted; flushes the event log on shutdown."""
    import uvicorn

    from .errors import BindError

    app = create_app(session)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        session.close()
