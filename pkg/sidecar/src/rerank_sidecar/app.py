"""FastAPI app exposing POST /rerank and GET /health.

Wire contract: request ``{"model", "query", "documents": [{"id",
"text"}]}``, response ``{"scores": [...]}`` aligned with request order.
Scores are always finite; a model emitting NaN is a server error, never
a protocol violation passed downstream.
"""

from __future__ import annotations

import logging
import math
import threading
from typing import Sequence

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from rerank_sidecar.config import SidecarConfig
from rerank_sidecar.scorers import Scorer, load_scorer

log = logging.getLogger(__name__)


class RerankDocument(BaseModel):
    id: str
    text: str


class RerankRequest(BaseModel):
    model: str
    query: str
    documents: list[RerankDocument] = Field(min_length=1)


class RerankResponse(BaseModel):
    scores: list[float]


class _ModelEntry:
    """One loaded scorer plus a lock serializing its inference."""

    def __init__(self, identifier: str, scorer: Scorer):
        self.identifier = identifier
        self.scorer = scorer
        self.lock = threading.Lock()


def score_batch(entry: _ModelEntry, query: str, texts: Sequence[str], max_batch: int) -> list[float]:
    """Run inference in max_batch-sized chunks, concatenated in order."""
    scores: list[float] = []
    with entry.lock:
        for start in range(0, len(texts), max_batch):
            chunk = texts[start : start + max_batch]
            scores.extend(float(s) for s in entry.scorer.score(query, chunk))
    if len(scores) != len(texts):
        raise HTTPException(status_code=500, detail=f"model '{entry.identifier}' returned a wrong score count")
    if any(not math.isfinite(s) for s in scores):
        raise HTTPException(status_code=500, detail=f"model '{entry.identifier}' produced a non-finite score")
    return scores


def create_app(config: SidecarConfig) -> FastAPI:
    """Load every registered model eagerly; a load failure aborts startup."""
    entries: dict[str, _ModelEntry] = {}
    for backend_id, identifier in config.registry.items():
        log.info("loading model '%s' as backend '%s'", identifier, backend_id)
        entries[backend_id] = _ModelEntry(identifier, load_scorer(identifier, device=config.device))

    app = FastAPI(title="rerank-sidecar")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "ready": True,
            "models": {backend_id: e.identifier for backend_id, e in entries.items()},
            "max_batch": config.max_batch,
        }

    @app.post("/rerank", response_model=RerankResponse)
    def rerank(request: RerankRequest) -> RerankResponse:
        entry = entries.get(request.model)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"model '{request.model}' is not registered")
        texts = [d.text for d in request.documents]
        return RerankResponse(scores=score_batch(entry, request.query, texts, config.max_batch))

    return app
