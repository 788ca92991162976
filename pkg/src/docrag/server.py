"""HTTP service exposing the query pipeline; one app factory shared by
`serve` and the tests."""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import __version__
from .config import OVERRIDABLE_KEYS, ConfigError, PipelineConfig
from .pipeline import Pipeline, PipelineStageError

logger = logging.getLogger(__name__)

RERANK_BACKEND_NAMES = ("rrf", "embedding", "remote")


def _error(status: int, code: str, message: str, stage: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message,
                                 "stage": stage})


def create_app(pipeline: Pipeline) -> FastAPI:
    """App over a loaded pipeline; state is read-only so concurrent
    requests share it safely."""
    app = FastAPI(title="docrag", version=__version__)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.post("/api/query")
    async def query(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_request", "request body must be JSON",
                          "request")
        if not isinstance(body, dict):
            return _error(400, "bad_request", "request body must be a JSON "
                          "object", "request")
        question = body.get("question")
        if not isinstance(question, str) or not question.strip():
            return _error(400, "bad_request",
                          "body must include a non-empty 'question'", "request")
        overrides = body.get("overrides") or {}
        if not isinstance(overrides, dict):
            return _error(400, "bad_request", "'overrides' must be an object",
                          "request")
        try:
            response = pipeline.run_query(question, overrides=overrides)
        except (ConfigError, ValueError) as exc:
            return _error(400, "bad_request", str(exc), "request")
        except PipelineStageError as exc:
            logger.error("query failed at stage %s: %s", exc.stage, exc)
            return JSONResponse(status_code=500, content=exc.to_payload())
        return response.to_dict()

    @app.get("/api/chunks/{chunk_id:path}")
    def get_chunk(chunk_id: str):
        chunk = pipeline.chunk(chunk_id)
        if chunk is None:
            return _error(404, "not_found", f"no chunk with id {chunk_id!r}",
                          "chunks")
        return {"id": chunk.id, "source_path": chunk.source_path,
                "heading_path": list(chunk.heading_path), "text": chunk.text,
                "token_count": chunk.token_count}

    @app.get("/api/config")
    def get_config():
        return {"config": pipeline.config_snapshot(),
                "config_hash": pipeline.config_hash(),
                "overridable_keys": list(OVERRIDABLE_KEYS),
                "rerank_backends": list(RERANK_BACKEND_NAMES)}

    @app.get("/api/health")
    def health():
        return {"status": "ok",
                "chunks": len(pipeline.chunks_by_id),
                "indexed_terms": len(pipeline.index.postings),
                "vector_count": len(pipeline.store),
                "vector_dim": pipeline.store.dim,
                "config_hash": pipeline.config_hash()}

    return app


def serve(config: PipelineConfig, host: str = "127.0.0.1",
          port: int = 8080) -> None:
    """Build the pipeline from persisted artifacts and serve until killed."""
    import uvicorn

    pipeline = Pipeline.from_config(config)
    logger.info("serving %d chunks on %s:%d", len(pipeline.chunks_by_id),
                host, port)
    uvicorn.run(create_app(pipeline), host=host, port=port)
