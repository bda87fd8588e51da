from __future__ import annotations

import asyncio
import logging
import sys
from typing import AsyncIterator, List, Literal

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import get_settings
from .errors import VarfieldError
from .log import configure_logging
from .modeldsl import parse_model
from .pipeline import YMDemoPipeline
from .render import SCHEMA, render, to_json
from .utils import CancelToken, sse_event, utc_now
from .varops import euler_lagrange, jacobi_morphism, noether_current, pair_current, variation_decompose

configure_logging(get_settings().log_level, stream=sys.stdout)
logger = logging.getLogger(__name__)

app = FastAPI(title="varfield", version=__version__)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=False,
    allow_methods=["*"],
    allow_headers=["*"],
)

Operation = Literal["elform", "noether", "jacobi", "paircurrent", "varsplit"]


class DeriveRequest(BaseModel):
    model: str = Field(..., description="Model file contents")
    operation: Operation
    fields: List[str] = Field(default_factory=list, description="Vector field names used by the operation")
    format: Literal["plain", "latex", "json"] = "json"


def _derive(request: DeriveRequest) -> dict:
    settings = get_settings()
    model = parse_model(request.model)
    cancel = CancelToken.after(settings.timeout_s)
    lam = model.lagrangian_form()
    fields = [model.vecfield(name) for name in request.fields]
    needed = {"elform": 0, "noether": 1, "jacobi": 1, "paircurrent": 2, "varsplit": 1}[request.operation]
    if len(fields) < needed:
        raise HTTPException(status_code=400, detail=f"{request.operation} needs {needed} vector field(s)")
    if request.operation == "elform":
        values = [euler_lagrange(lam, cancel=cancel)]
    elif request.operation == "noether":
        values = [noether_current(lam, fields[0], cancel=cancel).form]
    elif request.operation == "jacobi":
        values = [jacobi_morphism(lam, fields[0], cancel=cancel)]
    elif request.operation == "paircurrent":
        values = [pair_current(lam, fields[0], fields[1], cancel=cancel).form]
    else:
        split = variation_decompose(lam, fields, cancel=cancel)
        values = [split.euler_term, *split.current_terms]
    if request.format == "json":
        results = [to_json(value) for value in values]
    else:
        results = [render(value, request.format) for value in values]
    return {"schema": SCHEMA, "operation": request.operation, "format": request.format, "results": results}


@app.get("/healthz")
async def healthcheck() -> dict:
    return {"status": "ok", "timestamp": utc_now()}


@app.post("/api/derive")
async def api_derive(request: DeriveRequest) -> JSONResponse:
    loop = asyncio.get_running_loop()
    try:
        payload = await loop.run_in_executor(None, _derive, request)
    except VarfieldError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return JSONResponse(payload)


@app.get("/api/ym-demo")
async def api_ym_demo(dim: int = Query(2, ge=2, le=4, description="Base dimension of the Yang-Mills model")) -> StreamingResponse:
    pipeline = YMDemoPipeline(dim=dim)

    async def event_stream() -> AsyncIterator[bytes]:
        try:
            async for event in pipeline.stream():
                yield sse_event(event)
        except Exception as exc:
            logger.exception("Yang-Mills demo failed for dim %s", dim)
            yield sse_event({"stage": "error", "dim": dim, "error": str(exc)}, event="error")

    headers = {"Cache-Control": "no-cache", "X-Accel-Buffering": "no"}
    return StreamingResponse(event_stream(), media_type="text/event-stream", headers=headers)


@app.get("/")
async def root(request: Request) -> JSONResponse:
    settings = get_settings()
    docs_link = request.url_for("swagger_ui_html") if app.docs_url else None
    payload = {
        "name": app.title,
        "version": app.version,
        "status": "ok",
        "links": {"docs": str(docs_link) if docs_link else None},
        "operations": ["elform", "noether", "jacobi", "paircurrent", "varsplit"],
        "settings": {
            "threads": settings.threads,
            "timeout_s": settings.timeout_s,
            "max_order": settings.max_order,
        },
    }
    return JSONResponse(payload)
