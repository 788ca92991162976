"""Embedders and an in-memory vector store with cosine search."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import Chunk
from .remote import post_json
from .tokenizer import tokenize

DEFAULT_DIM = 64


class VectorStoreError(Exception):
    pass


@dataclass
class VectorHit:
    chunk_id: str
    score: float
    rank: int


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: list[str]) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic local embedder: each token maps to a fixed gaussian
    vector seeded from its hash, texts embed as the normalized token sum.

    No trained weights, but overlapping token multisets land close in
    cosine space, which is enough for offline tests and demos.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is None:
            seed = int.from_bytes(
                hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            cached = rng.standard_normal(self.dim)
            self._token_cache[token] = cached
        return cached

    def embed(self, text: str) -> np.ndarray:
        total = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            total += self._token_vector(token)
        norm = np.linalg.norm(total)
        if norm > 0.0:
            total /= norm
        return total

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.stack([self.embed(t) for t in texts])


class RemoteEmbeddingClient:
    """Embedder backed by an OpenAI-compatible /v1/embeddings endpoint."""

    def __init__(self, base_url: str, model: str, dim: int = DEFAULT_DIM,
                 timeout: float = 30.0, post_fn=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.timeout = timeout
        self._post_fn = post_fn

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float64)
        body = post_json(f"{self.base_url}/v1/embeddings",
                         {"model": self.model, "input": texts},
                         timeout=self.timeout, post_fn=self._post_fn)
        rows = sorted(body["data"], key=lambda item: item["index"])
        return np.array([row["embedding"] for row in rows], dtype=np.float64)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


class VectorStore:
    """Chunk-id keyed dense vectors; search is exact cosine over all rows."""

    def __init__(self, dim: int):
        self.dim = dim
        self.ids: list[str] = []
        # float64 in memory for stable comparisons; float32 only on disk
        self.matrix = np.zeros((0, dim), dtype=np.float64)
        self._norms: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def add(self, chunk_ids: list[str], vectors: np.ndarray) -> None:
        if vectors.shape != (len(chunk_ids), self.dim):
            raise VectorStoreError(
                f"expected vectors of shape {(len(chunk_ids), self.dim)}, "
                f"got {vectors.shape}")
        seen = set(self.ids)
        for cid in chunk_ids:
            if cid in seen:
                raise VectorStoreError(f"duplicate chunk id {cid!r}")
            seen.add(cid)
        self.ids.extend(chunk_ids)
        self.matrix = np.vstack([self.matrix, vectors.astype(np.float64)])
        self._norms = None

    def search(self, query_vector: np.ndarray, k: int) -> list[VectorHit]:
        """Top-k rows by cosine similarity; zero-norm rows or queries score 0,
        ties break on ascending chunk id."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if len(self.ids) == 0:
            return []
        query = np.asarray(query_vector, dtype=np.float64)
        if query.shape != (self.dim,):
            raise VectorStoreError(
                f"expected query of shape {(self.dim,)}, got {query.shape}")
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if self._norms is None:
            self._norms = np.linalg.norm(matrix, axis=1)
        qnorm = np.linalg.norm(query)
        denom = self._norms * qnorm
        with np.errstate(divide="ignore", invalid="ignore"):
            sims = np.where(denom > 0.0, matrix @ query / np.where(
                denom > 0.0, denom, 1.0), 0.0)
        order = sorted(range(len(self.ids)),
                       key=lambda i: (-sims[i], self.ids[i]))
        return [VectorHit(chunk_id=self.ids[i], score=float(sims[i]), rank=r)
                for r, i in enumerate(order[:k], start=1)]

    def save(self, path: str | Path) -> None:
        np.savez(path, ids=np.array(self.ids, dtype=object),
                 matrix=self.matrix.astype(np.float32),
                 dim=np.array([self.dim]))

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        with np.load(path, allow_pickle=True) as data:
            store = cls(dim=int(data["dim"][0]))
            store.ids = [str(cid) for cid in data["ids"]]
            store.matrix = data["matrix"].astype(np.float64)
        if store.matrix.shape != (len(store.ids), store.dim):
            raise VectorStoreError(f"corrupt store at {path}: shape mismatch")
        return store


def build_vector_store(chunks: list[Chunk], embedder: Embedder) -> VectorStore:
    store = VectorStore(dim=embedder.dim)
    if chunks:
        vectors = embedder.embed_batch([c.text for c in chunks])
        store.add([c.id for c in chunks], vectors)
    return store


def semantic_search(store: VectorStore, embedder: Embedder,
                    query_text: str, k: int) -> list[VectorHit]:
    return store.search(embedder.embed(query_text), k)
