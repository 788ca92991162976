"""Inverted index over chunks with BM25 and TF-IDF scoring."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Chunk
from .tokenizer import tokenize

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


class IndexBuildError(Exception):
    pass


@dataclass
class LexicalHit:
    chunk_id: str
    score: float
    rank: int


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    doc_count: int
    avg_doc_length: float
    _tfidf_norm_cache: dict[str, float] | None = field(
        default=None, repr=False, compare=False)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf_bm25(self, term: str) -> float:
        """ln((N - df + 0.5) / (df + 0.5) + 1); always positive."""
        df = self.df(term)
        return math.log((self.doc_count - df + 0.5) / (df + 0.5) + 1.0)

    def idf_tfidf(self, term: str) -> float:
        """ln(N / df) + 1; the +1 keeps single-document corpora scorable."""
        return math.log(self.doc_count / self.df(term)) + 1.0

    def tfidf_doc_norms(self) -> dict[str, float]:
        """Euclidean norm of each document's tf-idf vector (cached)."""
        if self._tfidf_norm_cache is None:
            sq = defaultdict(float)
            for term, plist in self.postings.items():
                idf = self.idf_tfidf(term)
                for chunk_id, tf in plist:
                    w = (1.0 + math.log(tf)) * idf
                    sq[chunk_id] += w * w
            self._tfidf_norm_cache = {cid: math.sqrt(v) for cid, v in sq.items()}
        return self._tfidf_norm_cache


def build_index(chunks: list[Chunk]) -> InvertedIndex:
    postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
    doc_lengths: dict[str, int] = {}
    for chunk in chunks:
        if chunk.id in doc_lengths:
            raise IndexBuildError(f"duplicate chunk id {chunk.id!r}")
        tokens = tokenize(chunk.text)
        doc_lengths[chunk.id] = len(tokens)
        for term, tf in sorted(Counter(tokens).items()):
            postings[term].append((chunk.id, tf))
    doc_count = len(doc_lengths)
    avg = sum(doc_lengths.values()) / doc_count if doc_count else 0.0
    return InvertedIndex(postings=dict(postings), doc_lengths=doc_lengths,
                         doc_count=doc_count, avg_doc_length=avg)


def _ranked(scores: dict[str, float], k: int) -> list[LexicalHit]:
    ordered = sorted(((cid, s) for cid, s in scores.items() if s > 0.0),
                     key=lambda pair: (-pair[1], pair[0]))
    return [LexicalHit(chunk_id=cid, score=s, rank=i)
            for i, (cid, s) in enumerate(ordered[:k], start=1)]


def bm25_search(index: InvertedIndex, query_text: str, k: int,
                k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> list[LexicalHit]:
    """Top-k chunks by BM25; query is a bag of tokens, ties break on chunk id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores: dict[str, float] = defaultdict(float)
    for term in tokenize(query_text):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf_bm25(term)
        for chunk_id, tf in plist:
            length_norm = 1.0 - b + b * index.doc_lengths[chunk_id] / index.avg_doc_length
            scores[chunk_id] += idf * tf * (k1 + 1.0) / (tf + k1 * length_norm)
    return _ranked(scores, k)


def tfidf_search(index: InvertedIndex, query_text: str, k: int) -> list[LexicalHit]:
    """Top-k chunks by cosine between tf-idf weighted query and document vectors.

    Weights are (1 + ln tf) * (ln(N/df) + 1) on both sides; query terms absent
    from the corpus are ignored.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query_weights: dict[str, float] = {}
    for term, qtf in Counter(tokenize(query_text)).items():
        if index.df(term) == 0:
            continue
        query_weights[term] = (1.0 + math.log(qtf)) * index.idf_tfidf(term)
    if not query_weights:
        return []
    qnorm = math.sqrt(sum(w * w for w in query_weights.values()))
    doc_norms = index.tfidf_doc_norms()

    scores: dict[str, float] = defaultdict(float)
    for term, qw in query_weights.items():
        idf = index.idf_tfidf(term)
        for chunk_id, tf in index.postings[term]:
            dw = (1.0 + math.log(tf)) * idf
            scores[chunk_id] += (qw / qnorm) * (dw / doc_norms[chunk_id])
    return _ranked(scores, k)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    payload = {
        "doc_count": index.doc_count,
        "avg_doc_length": index.avg_doc_length,
        "doc_lengths": index.doc_lengths,
        "postings": {t: [[cid, tf] for cid, tf in plist]
                     for t, plist in index.postings.items()},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_index(path: str | Path) -> InvertedIndex:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return InvertedIndex(
        postings={t: [(cid, int(tf)) for cid, tf in plist]
                  for t, plist in payload["postings"].items()},
        doc_lengths={cid: int(n) for cid, n in payload["doc_lengths"].items()},
        doc_count=int(payload["doc_count"]),
        avg_doc_length=float(payload["avg_doc_length"]),
    )
