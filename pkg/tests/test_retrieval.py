"""Tests for candidate fusion, reciprocal-rank scoring, and reranking."""

from __future__ import annotations

import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docrag.lexical import LexicalHit, build_index
from docrag.remote import TransportError
from docrag.retrieval import (
    EmbeddingCosineReranker,
    RankedCandidate,
    RemoteCrossEncoderReranker,
    Retriever,
    RrfPassthroughReranker,
    fuse_candidates,
    rerank,
    rrf_scores,
)
from docrag.vectors import HashEmbedder, VectorHit, build_vector_store

from conftest import make_keyword_corpus

DOC_IDS = [f"d{i:02d}" for i in range(30)]


def _brute_force_rrf(rankings: list[list[str]], k: int) -> dict[str, float]:
    """Direct evaluation of the fusion formula, one document at a time,
    using list.index() so it shares no code with the implementation."""
    ids = sorted({cid for ranking in rankings for cid in ranking})
    scores = {}
    for cid in ids:
        total = 0.0
        for ranking in rankings:
            if cid in ranking:
                total += 1.0 / (k + ranking.index(cid) + 1)
        scores[cid] = total
    return scores


@st.composite
def _rank_lists(draw) -> list[list[str]]:
    n_rankings = draw(st.integers(min_value=1, max_value=3))
    rankings = []
    for _ in range(n_rankings):
        size = draw(st.integers(min_value=0, max_value=len(DOC_IDS)))
        perm = draw(st.permutations(DOC_IDS))
        rankings.append(list(perm)[:size])
    return rankings


class TestRrfScores:

    def test_rank_one_in_both_lists(self):
        scores = rrf_scores([["d1"], ["d1"]], k=60)
        assert scores == {"d1": 2.0 / 61.0}
        assert scores["d1"] == 0.03278688524590164

    def test_rank_one_in_single_list(self):
        assert rrf_scores([["d1"], []], k=60) == {"d1": 1.0 / 61.0}

    def test_absent_ranking_contributes_zero(self):
        scores = rrf_scores([["d1", "d2"], ["d2"]], k=60)
        assert scores["d1"] == 1.0 / 61.0
        assert scores["d2"] == 1.0 / 62.0 + 1.0 / 61.0

    def test_nonpositive_k_rejected(self):
        for bad in (0, -1):
            with pytest.raises(ValueError):
                rrf_scores([["d1"]], k=bad)

    @settings(max_examples=100, deadline=None)
    @given(_rank_lists())
    def test_matches_brute_force_oracle(self, rankings):
        got = rrf_scores(rankings, k=60)
        want = _brute_force_rrf(rankings, k=60)
        assert set(got) == set(want)
        for cid in want:
            assert got[cid] == pytest.approx(want[cid], abs=1e-12)
        order = sorted(got, key=lambda cid: (-got[cid], cid))
        oracle_order = sorted(want, key=lambda cid: (-want[cid], cid))
        assert order == oracle_order

    @settings(max_examples=50, deadline=None)
    @given(st.permutations(DOC_IDS), st.integers(min_value=1, max_value=29))
    def test_better_rank_strictly_increases_score(self, perm, position):
        ranking = list(perm)
        mover = ranking[position]
        before = rrf_scores([ranking], k=60)[mover]
        ranking[position - 1], ranking[position] = (
            ranking[position], ranking[position - 1])
        after = rrf_scores([ranking], k=60)[mover]
        assert after > before


def _lex(chunk_id: str, rank: int, score: float = 1.0) -> LexicalHit:
    return LexicalHit(chunk_id=chunk_id, score=score, rank=rank)


def _sem(chunk_id: str, rank: int, score: float = 1.0) -> VectorHit:
    return VectorHit(chunk_id=chunk_id, score=score, rank=rank)


class TestFuseCandidates:

    def test_merges_and_deduplicates(self):
        fused = fuse_candidates(
            [_lex("d1", 1, 2.0), _lex("d2", 2, 1.0)],
            [_sem("d2", 1, 0.9), _sem("d3", 2, 0.5)])
        assert [c.chunk_id for c in fused] == ["d2", "d1", "d3"]
        d2 = fused[0]
        assert d2.lexical_rank == 2 and d2.semantic_rank == 1
        assert d2.lexical_score == 1.0 and d2.semantic_score == 0.9
        assert d2.rrf_score == pytest.approx(1.0 / 62.0 + 1.0 / 61.0, abs=1e-12)
        d1 = fused[1]
        assert d1.semantic_rank is None and d1.semantic_score is None
        assert d1.rrf_score == pytest.approx(1.0 / 61.0, abs=1e-12)

    def test_identical_lists_keep_pool_size(self):
        lex = [_lex("a", 1), _lex("b", 2)]
        sem = [_sem("a", 1), _sem("b", 2)]
        fused = fuse_candidates(lex, sem)
        assert len(fused) == 2
        assert all(c.lexical_rank == c.semantic_rank for c in fused)

    def test_no_chunk_id_appears_twice(self):
        fused = fuse_candidates(
            [_lex("a", 1), _lex("b", 2), _lex("c", 3)],
            [_sem("c", 1), _sem("a", 2), _sem("d", 3)])
        ids = [c.chunk_id for c in fused]
        assert len(ids) == len(set(ids))
        assert set(ids) == {"a", "b", "c", "d"}

    def test_hit_list_order_does_not_matter(self):
        lex = [_lex("a", 1, 3.0), _lex("b", 2, 2.0), _lex("c", 3, 1.0)]
        sem = [_sem("b", 1, 0.8), _sem("c", 2, 0.6)]
        assert fuse_candidates(lex, sem) == fuse_candidates(
            list(reversed(lex)), list(reversed(sem)))

    def test_both_sides_empty(self):
        assert fuse_candidates([], []) == []

    def test_ties_break_on_ascending_chunk_id(self):
        fused = fuse_candidates([_lex("zz", 1)], [_sem("aa", 1)])
        assert [c.chunk_id for c in fused] == ["aa", "zz"]


@pytest.fixture(scope="module")
def retriever():
    chunks, _ = make_keyword_corpus(20)
    embedder = HashEmbedder(dim=64)
    return Retriever(index=build_index(chunks),
                     store=build_vector_store(chunks, embedder),
                     embedder=embedder)


class TestRetriever:

    def test_hybrid_puts_keyword_chunk_first(self, retriever):
        out = retriever.retrieve(
            "How do I run cmd_placement_00 for the placement step?", "hybrid")
        assert out[0].chunk_id == "guide-0.md#using-cmd_placement_00"
        assert out[0].lexical_rank == 1

    def test_lexical_mode_has_no_semantic_evidence(self, retriever):
        out = retriever.retrieve("cmd_routing_01", "lexical")
        assert out and all(c.semantic_rank is None for c in out)

    def test_semantic_mode_has_no_lexical_evidence(self, retriever):
        out = retriever.retrieve("cmd_routing_01", "semantic")
        assert out and all(c.lexical_rank is None for c in out)

    def test_out_of_vocabulary_query_uses_semantic_side_only(self, retriever):
        out = retriever.retrieve("qqqzzz wwwyyy", "hybrid")
        assert out and all(c.lexical_rank is None for c in out)

    def test_unknown_mode_rejected(self, retriever):
        with pytest.raises(ValueError, match="mode"):
            retriever.retrieve("anything", "both")

    def test_retrieval_is_deterministic(self, retriever):
        query = "update the timing state"
        assert retriever.retrieve(query, "hybrid") == retriever.retrieve(
            query, "hybrid")

    def test_no_duplicate_ids_in_pool(self, retriever):
        out = retriever.retrieve("run the command for the routing step", "hybrid")
        ids = [c.chunk_id for c in out]
        assert len(ids) == len(set(ids))


def _candidates() -> tuple[list[RankedCandidate], list[str]]:
    cands = [RankedCandidate(chunk_id="d1", rrf_score=0.030),
             RankedCandidate(chunk_id="d2", rrf_score=0.020),
             RankedCandidate(chunk_id="d3", rrf_score=0.010)]
    texts = ["place the cells", "route the nets", "check the timing"]
    return cands, texts


class _ExplodingBackend:
    name = "exploding"

    def score(self, query, candidates, texts):
        raise TransportError("boom")


class _ShortBackend:
    name = "short"

    def score(self, query, candidates, texts):
        return [1.0]


class TestRerank:

    def test_passthrough_keeps_fused_order(self):
        cands, texts = _candidates()
        result = rerank("q", cands, texts, RrfPassthroughReranker(), top_k=2)
        assert [h.chunk_id for h in result.hits] == ["d1", "d2"]
        assert [h.rank for h in result.hits] == [1, 2]
        assert result.backend_name == "rrf-passthrough"
        assert not result.used_fallback

    def test_remote_backend_orders_by_relevance(self):
        calls = []

        def fake_post(url, json=None, headers=None, timeout=None):
            calls.append((url, json))

            class R:
                status_code = 200

                @staticmethod
                def json():
                    return {"results": [{"index": 1, "relevance_score": 0.9},
                                        {"index": 0, "relevance_score": 0.1},
                                        {"index": 2, "relevance_score": 0.5}]}
            return R()

        cands, texts = _candidates()
        backend = RemoteCrossEncoderReranker(
            "http://scorer.local", model="ce-1", post_fn=fake_post)
        result = rerank("q", cands, texts, backend, top_k=1)
        assert [h.chunk_id for h in result.hits] == ["d2"]
        assert result.hits[0].score == 0.9
        url, body = calls[0]
        assert url == "http://scorer.local/v1/rerank"
        assert body == {"model": "ce-1", "query": "q",
                        "documents": texts, "top_n": 3}

    def test_embedding_backend_prefers_matching_text(self):
        cands, texts = _candidates()
        backend = EmbeddingCosineReranker(HashEmbedder(dim=64))
        result = rerank("route the nets", cands, texts, backend, top_k=3)
        assert result.hits[0].chunk_id == "d2"
        assert result.hits[0].score == pytest.approx(1.0, abs=1e-9)

    def test_transport_failure_falls_back_to_rrf_order(self, caplog):
        cands, texts = _candidates()
        with caplog.at_level(logging.WARNING):
            result = rerank("q", cands, texts, _ExplodingBackend(), top_k=3)
        assert result.used_fallback
        assert [h.chunk_id for h in result.hits] == ["d1", "d2", "d3"]
        assert [h.score for h in result.hits] == [0.030, 0.020, 0.010]
        assert any("falling back" in r.message for r in caplog.records)

    def test_fallback_can_be_disabled(self):
        cands, texts = _candidates()
        with pytest.raises(TransportError):
            rerank("q", cands, texts, _ExplodingBackend(), top_k=3,
                   fallback_to_rrf=False)

    def test_wrong_score_count_treated_as_transport_failure(self):
        cands, texts = _candidates()
        result = rerank("q", cands, texts, _ShortBackend(), top_k=3)
        assert result.used_fallback

    def test_score_ties_break_on_chunk_id(self):
        cands, texts = _candidates()

        class Flat:
            name = "flat"

            def score(self, query, candidates, texts):
                return [0.5, 0.5, 0.5]

        result = rerank("q", list(reversed(cands)), list(reversed(texts)),
                        Flat(), top_k=3)
        assert [h.chunk_id for h in result.hits] == ["d1", "d2", "d3"]

    def test_empty_pool_gives_empty_result(self):
        result = rerank("q", [], [], RrfPassthroughReranker(), top_k=5)
        assert result.hits == []

    def test_invalid_arguments_rejected(self):
        cands, texts = _candidates()
        with pytest.raises(ValueError, match="top_k"):
            rerank("q", cands, texts, RrfPassthroughReranker(), top_k=0)
        with pytest.raises(ValueError, match="align"):
            rerank("q", cands, texts[:2], RrfPassthroughReranker(), top_k=1)
