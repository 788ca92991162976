"""The query pipeline shared by the CLI and the HTTP service: retrieve,
fuse, rerank, generate, with per-stage wall-clock timings."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError, PipelineConfig
from .corpus import Chunk, load_chunks
from .generation import (CannedChatClient, ChatClient, GenerationError,
                         PromptBudgetError, PromptTemplate, RemoteChatClient,
                         build_prompt, prompt_key)
from .lexical import InvertedIndex, bm25_search, build_index, load_index, tfidf_search
from .metrics import JudgeClient, LexicalOverlapJudge, RemoteJudgeClient
from .remote import TransportError
from .retrieval import (EmbeddingCosineReranker, RankedCandidate,
                        RemoteCrossEncoderReranker, RerankBackend,
                        RrfPassthroughReranker, fuse_candidates, rerank)
from .vectors import (Embedder, HashEmbedder, RemoteEmbeddingClient,
                      VectorStore, build_vector_store, semantic_search)

logger = logging.getLogger(__name__)

STAGES = ("retrieve", "fuse", "rerank", "generate")


class PipelineStageError(Exception):
    """A pipeline stage failed outright (no partial result to return)."""

    def __init__(self, stage: str, message: str, code: str = "stage_failed"):
        super().__init__(message)
        self.stage = stage
        self.code = code

    def to_payload(self) -> dict:
        return {"code": self.code, "message": str(self), "stage": self.stage}


@dataclass
class QueryCandidate:
    chunk_id: str
    rank: int
    text: str
    heading_path: list[str]
    rrf_score: float
    rerank_score: float
    lexical_rank: int | None = None
    semantic_rank: int | None = None
    lexical_score: float | None = None
    semantic_score: float | None = None


@dataclass
class QueryResponse:
    answer: str
    candidates: list[QueryCandidate]
    timings_ms: dict[str, float]
    config_hash: str
    warnings: list[str] = field(default_factory=list)
    error: dict | None = None
    generation_info: dict | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def extract_question(prompt: str, prefix: str = "Question: ") -> str:
    """Pull the question line back out of a rendered prompt; used to key
    canned answers on the question rather than exact prompt bytes."""
    for line in reversed(prompt.splitlines()):
        if line.startswith(prefix):
            return line[len(prefix):]
    return prompt


def load_canned_answers(path: str | Path, key_mode: str = "hash") -> CannedChatClient:
    """Canned generator from a JSON file mapping key -> answer; keys are
    sha256 prompt hashes ("hash") or bare question text ("question")."""
    answers = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(answers, dict):
        raise ConfigError(f"canned answers at {path} must be a JSON object")
    key_fn = prompt_key if key_mode == "hash" else extract_question
    return CannedChatClient(answers=answers, key_fn=key_fn)


class Pipeline:
    """Read-only query engine over loaded chunks, a lexical index, and a
    vector store; safe for concurrent use."""

    def __init__(self, config: PipelineConfig, chunks: list[Chunk],
                 index: InvertedIndex, store: VectorStore, embedder: Embedder,
                 chat_client: ChatClient,
                 rerank_backend: RerankBackend | None = None,
                 judge_client: JudgeClient | None = None,
                 template: PromptTemplate | None = None):
        self.config = config
        self.chunks_by_id = {c.id: c for c in chunks}
        self.index = index
        self.store = store
        self.embedder = embedder
        self.chat_client = chat_client
        self.judge_client = judge_client
        self.template = template or PromptTemplate()
        self._backends: dict[str, RerankBackend] = {}
        if rerank_backend is not None:
            self._backends[config.rerank.backend] = rerank_backend

    @classmethod
    def from_config(cls, config: PipelineConfig,
                    chat_client: ChatClient | None = None,
                    rerank_backend: RerankBackend | None = None,
                    embedder: Embedder | None = None,
                    judge_client: JudgeClient | None = None) -> "Pipeline":
        """Build a pipeline from persisted artifacts; any client argument
        overrides what the config would construct."""
        try:
            chunks = load_chunks(config.paths.chunk_store)
        except Exception as exc:
            raise PipelineStageError("load", f"cannot load chunk store: {exc}")
        if embedder is None:
            if config.embedding.provider == "remote":
                embedder = RemoteEmbeddingClient(
                    config.embedding.endpoint, config.embedding.model,
                    dim=config.embedding.dim, timeout=config.limits.timeout_s)
            else:
                embedder = HashEmbedder(dim=config.embedding.dim)
        try:
            if Path(config.paths.lexical_index).exists():
                index = load_index(config.paths.lexical_index)
            else:
                logger.info("lexical index missing; building in memory")
                index = build_index(chunks)
            if Path(config.paths.vector_store).exists():
                store = VectorStore.load(config.paths.vector_store)
            else:
                logger.info("vector store missing; building in memory")
                store = build_vector_store(chunks, embedder)
        except PipelineStageError:
            raise
        except Exception as exc:
            raise PipelineStageError("load", f"cannot load indexes: {exc}")
        if chat_client is None:
            gen = config.generator
            if gen.provider == "canned":
                chat_client = load_canned_answers(gen.canned_answers_path,
                                                  gen.canned_key)
            else:
                chat_client = RemoteChatClient(
                    gen.endpoint, gen.model, temperature=gen.temperature,
                    max_tokens=gen.max_tokens, timeout=config.limits.timeout_s,
                    retries=config.limits.retries)
        if judge_client is None:
            if config.judge.provider == "overlap":
                judge_client = LexicalOverlapJudge()
            elif config.judge.provider == "remote":
                judge_client = RemoteJudgeClient(config.judge.endpoint,
                                                 timeout=config.limits.timeout_s)
        return cls(config=config, chunks=chunks, index=index, store=store,
                   embedder=embedder, chat_client=chat_client,
                   rerank_backend=rerank_backend, judge_client=judge_client)

    def _backend_for(self, name: str) -> RerankBackend:
        backend = self._backends.get(name)
        if backend is None:
            if name == "rrf":
                backend = RrfPassthroughReranker()
            elif name == "embedding":
                backend = EmbeddingCosineReranker(self.embedder)
            elif name == "remote":
                backend = RemoteCrossEncoderReranker(
                    self.config.rerank.endpoint, self.config.rerank.model,
                    timeout=self.config.limits.timeout_s)
            else:
                raise ConfigError(f"unknown rerank backend {name!r}")
            self._backends[name] = backend
        return backend

    def chunk(self, chunk_id: str) -> Chunk | None:
        return self.chunks_by_id.get(chunk_id)

    def config_snapshot(self) -> dict:
        return self.config.to_dict()

    def config_hash(self) -> str:
        return self.config.config_hash()

    def _lexical_hits(self, question: str, k: int):
        if self.config.lexical.engine == "tfidf":
            return tfidf_search(self.index, question, k)
        return bm25_search(self.index, question, k,
                           k1=self.config.lexical.k1, b=self.config.lexical.b)

    def run_query(self, question: str, overrides: dict | None = None,
                  measure_timings: bool = True) -> QueryResponse:
        """Full retrieve -> fuse -> rerank -> generate pass.

        Retrieval coming back empty yields the configured not-found answer;
        a failed generation still returns the candidate list, annotated.
        Earlier-stage failures raise a structured error naming the stage.
        """
        if not isinstance(question, str) or not question.strip():
            raise ValueError("question must be a non-empty string")
        cfg = self.config.with_overrides(overrides or {})
        timings = {stage: 0.0 for stage in STAGES}
        warnings: list[str] = []

        started = time.perf_counter()
        try:
            lexical_hits = self._lexical_hits(question, cfg.lexical_k)
            semantic_hits = semantic_search(self.store, self.embedder,
                                            question, cfg.semantic_k)
        except TransportError as exc:
            raise PipelineStageError("retrieve", str(exc))
        timings["retrieve"] = (time.perf_counter() - started) * 1000.0

        started = time.perf_counter()
        fused = fuse_candidates(lexical_hits, semantic_hits, rrf_k=cfg.rrf_const)
        timings["fuse"] = (time.perf_counter() - started) * 1000.0

        if not fused:
            if not measure_timings:
                timings = {stage: 0.0 for stage in STAGES}
            return QueryResponse(answer=cfg.not_found_text, candidates=[],
                                 timings_ms=timings,
                                 config_hash=cfg.config_hash(),
                                 warnings=warnings)

        started = time.perf_counter()
        texts = [self.chunks_by_id[c.chunk_id].text for c in fused]
        result = rerank(question, fused, texts,
                        backend=self._backend_for(cfg.rerank.backend),
                        top_k=cfg.rerank_k,
                        fallback_to_rrf=cfg.rerank.fallback_to_rrf)
        timings["rerank"] = (time.perf_counter() - started) * 1000.0
        if result.used_fallback:
            warnings.append(f"rerank backend {result.backend_name} "
                            "unavailable; kept RRF order")

        fused_by_id: dict[str, RankedCandidate] = {c.chunk_id: c for c in fused}
        candidates = []
        for hit in result.hits:
            cand = fused_by_id[hit.chunk_id]
            chunk = self.chunks_by_id[hit.chunk_id]
            candidates.append(QueryCandidate(
                chunk_id=hit.chunk_id, rank=hit.rank, text=chunk.text,
                heading_path=list(chunk.heading_path),
                rrf_score=cand.rrf_score, rerank_score=hit.score,
                lexical_rank=cand.lexical_rank,
                semantic_rank=cand.semantic_rank,
                lexical_score=cand.lexical_score,
                semantic_score=cand.semantic_score))

        started = time.perf_counter()
        error = None
        generation_info = None
        answer = ""
        try:
            build = build_prompt(self.template, question,
                                 [self.chunks_by_id[c.chunk_id] for c in candidates],
                                 token_budget=cfg.token_budget)
            if build.dropped_chunk_ids:
                warnings.append("token budget dropped chunks: "
                                + ", ".join(build.dropped_chunk_ids))
            generated = self.chat_client.complete(build.text)
            answer = generated.answer_text
            generation_info = {
                "model_name": generated.model_name,
                "prompt_token_count": generated.prompt_token_count,
                "completion_token_count": generated.completion_token_count,
                "latency_ms": generated.latency_ms,
            }
        except (GenerationError, TransportError, PromptBudgetError) as exc:
            error = {"code": "generation_failed", "message": str(exc),
                     "stage": "generate"}
        timings["generate"] = (time.perf_counter() - started) * 1000.0

        if not measure_timings:
            timings = {stage: 0.0 for stage in STAGES}
        return QueryResponse(answer=answer, candidates=candidates,
                             timings_ms=timings, config_hash=cfg.config_hash(),
                             warnings=warnings, error=error,
                             generation_info=generation_info)

    def judge_answer(self, question: str, answer: str, reference: str) -> float | None:
        """Consistency score from the configured judge, or None when no
        judge is configured; transport failures propagate to the caller."""
        if self.judge_client is None:
            return None
        return self.judge_client.judge(question, answer, reference)


def build_artifacts(config: PipelineConfig, chunks: list[Chunk],
                    embedder: Embedder | None = None) -> None:
    """Build and persist the lexical index and vector store for a chunk
    list at the config's paths."""
    if embedder is None:
        embedder = HashEmbedder(dim=config.embedding.dim)
    index = build_index(chunks)
    from .lexical import save_index
    Path(config.paths.lexical_index).parent.mkdir(parents=True, exist_ok=True)
    save_index(index, config.paths.lexical_index)
    store = build_vector_store(chunks, embedder)
    Path(config.paths.vector_store).parent.mkdir(parents=True, exist_ok=True)
    store.save(config.paths.vector_store)
