"""Hybrid retrieval: lexical + semantic candidate merge, reciprocal-rank
fusion, and a pluggable rerank stage."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .lexical import InvertedIndex, bm25_search
from .remote import TransportError, post_json
from .vectors import Embedder, VectorStore, semantic_search

logger = logging.getLogger(__name__)

DEFAULT_RRF_K = 60


@dataclass
class RankedCandidate:
    chunk_id: str
    rrf_score: float
    lexical_rank: int | None = None
    semantic_rank: int | None = None
    lexical_score: float | None = None
    semantic_score: float | None = None


@dataclass
class RerankHit:
    chunk_id: str
    score: float
    rank: int


@dataclass
class RerankResult:
    hits: list[RerankHit]
    backend_name: str
    used_fallback: bool = False


def rrf_scores(rankings: list[list[str]], k: int = DEFAULT_RRF_K) -> dict[str, float]:
    """Reciprocal-rank fusion: for each id, sum 1/(k + rank) over every
    ranking that contains it (ranks are 1-based)."""
    if k <= 0:
        raise ValueError(f"k must be > 0, got {k}")
    fused: dict[str, float] = {}
    for ranking in rankings:
        for rank, chunk_id in enumerate(ranking, start=1):
            fused[chunk_id] = fused.get(chunk_id, 0.0) + 1.0 / (k + rank)
    return fused


def fuse_candidates(lexical_hits, semantic_hits,
                    rrf_k: int = DEFAULT_RRF_K) -> list[RankedCandidate]:
    """Merge two hit lists into deduplicated candidates ordered by RRF score
    (ties break on ascending chunk id).

    Fusion reads each hit's recorded rank, so the order the hit lists are
    handed over in does not matter.
    """
    if rrf_k <= 0:
        raise ValueError(f"rrf_k must be > 0, got {rrf_k}")
    by_id: dict[str, RankedCandidate] = {}
    for hit in lexical_hits:
        cand = by_id.setdefault(
            hit.chunk_id, RankedCandidate(chunk_id=hit.chunk_id, rrf_score=0.0))
        cand.rrf_score += 1.0 / (rrf_k + hit.rank)
        cand.lexical_rank, cand.lexical_score = hit.rank, hit.score
    for hit in semantic_hits:
        cand = by_id.setdefault(
            hit.chunk_id, RankedCandidate(chunk_id=hit.chunk_id, rrf_score=0.0))
        cand.rrf_score += 1.0 / (rrf_k + hit.rank)
        cand.semantic_rank, cand.semantic_score = hit.rank, hit.score
    return sorted(by_id.values(), key=lambda c: (-c.rrf_score, c.chunk_id))


class Retriever:
    """First-stage retrieval over a built index and vector store."""

    def __init__(self, index: InvertedIndex, store: VectorStore,
                 embedder: Embedder, lexical_k: int = 20,
                 semantic_k: int = 20, rrf_k: int = DEFAULT_RRF_K):
        self.index = index
        self.store = store
        self.embedder = embedder
        self.lexical_k = lexical_k
        self.semantic_k = semantic_k
        self.rrf_k = rrf_k

    def retrieve(self, query: str, mode: str = "hybrid") -> list[RankedCandidate]:
        """Candidates for a query under one of the modes lexical, semantic,
        hybrid; single-channel modes still report an RRF score so downstream
        stages see one shape."""
        if mode == "lexical":
            return fuse_candidates(
                bm25_search(self.index, query, self.lexical_k), [], rrf_k=self.rrf_k)
        if mode == "semantic":
            return fuse_candidates(
                [], semantic_search(self.store, self.embedder, query, self.semantic_k),
                rrf_k=self.rrf_k)
        if mode == "hybrid":
            return fuse_candidates(
                bm25_search(self.index, query, self.lexical_k),
                semantic_search(self.store, self.embedder, query, self.semantic_k),
                rrf_k=self.rrf_k)
        raise ValueError(f"unknown retrieval mode {mode!r}")


class RerankBackend(Protocol):
    name: str

    def score(self, query: str, candidates: list[RankedCandidate],
              texts: list[str]) -> list[float]: ...


class RemoteCrossEncoderReranker:
    """Scores candidates with a hosted cross-encoder rerank endpoint."""

    name = "cross-encoder"

    def __init__(self, base_url: str, model: str, timeout: float = 30.0,
                 post_fn=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self._post_fn = post_fn

    def score(self, query: str, candidates: list[RankedCandidate],
              texts: list[str]) -> list[float]:
        body = post_json(f"{self.base_url}/v1/rerank",
                         {"model": self.model, "query": query,
                          "documents": texts, "top_n": len(texts)},
                         timeout=self.timeout, post_fn=self._post_fn)
        scores = [0.0] * len(texts)
        for row in body["results"]:
            scores[int(row["index"])] = float(row["relevance_score"])
        return scores


class EmbeddingCosineReranker:
    """Scores candidates by cosine between query and chunk embeddings."""

    name = "embedding-cosine"

    def __init__(self, embedder: Embedder):
        self.embedder = embedder

    def score(self, query: str, candidates: list[RankedCandidate],
              texts: list[str]) -> list[float]:
        qvec = self.embedder.embed(query)
        qnorm = np.linalg.norm(qvec)
        scores = []
        for text in texts:
            dvec = self.embedder.embed(text)
            denom = qnorm * np.linalg.norm(dvec)
            scores.append(float(qvec @ dvec / denom) if denom > 0.0 else 0.0)
        return scores


class RrfPassthroughReranker:
    """Keeps first-stage RRF ordering; useful as a no-model baseline."""

    name = "rrf-passthrough"

    def score(self, query: str, candidates: list[RankedCandidate],
              texts: list[str]) -> list[float]:
        return [c.rrf_score for c in candidates]


def rerank(query: str, candidates: list[RankedCandidate], texts: list[str],
           backend: RerankBackend, top_k: int,
           fallback_to_rrf: bool = True) -> RerankResult:
    """Order candidates by backend score and keep the top_k.

    If the backend raises a transport error and fallback is enabled, the
    RRF ordering is kept and the result is flagged so callers can surface
    the degradation instead of silently passing it off as reranked.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if len(texts) != len(candidates):
        raise ValueError("texts must align 1:1 with candidates")
    if not candidates:
        return RerankResult(hits=[], backend_name=backend.name)
    used_fallback = False
    try:
        scores = backend.score(query, candidates, texts)
        if len(scores) != len(candidates):
            raise TransportError(
                f"backend returned {len(scores)} scores for "
                f"{len(candidates)} candidates")
    except TransportError as exc:
        if not fallback_to_rrf:
            raise
        logger.warning("rerank backend %s failed (%s); falling back to RRF order",
                       backend.name, exc)
        scores = [c.rrf_score for c in candidates]
        used_fallback = True
    order = sorted(range(len(candidates)),
                   key=lambda i: (-scores[i], candidates[i].chunk_id))
    hits = [RerankHit(chunk_id=candidates[i].chunk_id, score=float(scores[i]),
                      rank=r)
            for r, i in enumerate(order[:top_k], start=1)]
    return RerankResult(hits=hits, backend_name=backend.name,
                        used_fallback=used_fallback)
