"""Tests for the contrastive and NLL loss calculators and their gradients."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docrag.losses import (
    EmbeddingBatch,
    RerankBatch,
    TokenSequenceLikelihood,
    autoregressive_nll,
    embedding_contrastive_gradients,
    embedding_contrastive_loss,
    embedding_loss_fd_gradients,
    finite_difference_gradient,
    reranker_contrastive_gradients,
    reranker_contrastive_loss,
    reranker_loss_fd_gradients,
)

SIM = st.floats(min_value=-1.0, max_value=1.0)
SCORE = st.floats(min_value=-2.0, max_value=2.0)
TAU = st.floats(min_value=0.3, max_value=2.0)
PROB = st.floats(min_value=1e-6, max_value=1.0)


@st.composite
def _embedding_batches(draw) -> EmbeddingBatch:
    m = draw(st.integers(min_value=1, max_value=4))
    square = st.lists(st.lists(SIM, min_size=m, max_size=m),
                      min_size=m, max_size=m)
    return EmbeddingBatch(sims_pos=np.array(draw(square)),
                          sims_neg=np.array(draw(square)),
                          tau=draw(TAU))


@st.composite
def _rerank_batches(draw) -> RerankBatch:
    return RerankBatch(pos_score=draw(SCORE),
                       neg_scores=draw(st.lists(SCORE, min_size=1, max_size=5)),
                       tau=draw(TAU))


def _naive_embedding_losses(batch: EmbeddingBatch) -> list[float]:
    out = []
    for i in range(batch.batch_size):
        denom = sum(math.exp(v / batch.tau)
                    for v in [*batch.sims_pos[i], *batch.sims_neg[i]])
        out.append(-math.log(math.exp(batch.sims_pos[i, i] / batch.tau) / denom))
    return out


class TestEmbeddingBatchValidation:

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            EmbeddingBatch(sims_pos=np.zeros((2, 3)), sims_neg=np.zeros((2, 3)))

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(ValueError, match="match"):
            EmbeddingBatch(sims_pos=np.zeros((2, 2)), sims_neg=np.zeros((3, 3)))

    def test_rejects_non_finite_sims(self):
        with pytest.raises(ValueError, match="finite"):
            EmbeddingBatch(sims_pos=np.array([[np.inf]]),
                           sims_neg=np.array([[0.0]]))

    def test_rejects_bad_tau(self):
        for tau in (0.0, -1.0, math.inf):
            with pytest.raises(ValueError, match="tau"):
                EmbeddingBatch(sims_pos=np.array([[1.0]]),
                               sims_neg=np.array([[0.0]]), tau=tau)

    def test_from_dict_defaults_tau(self):
        batch = EmbeddingBatch.from_dict(
            {"sims_pos": [[1.0]], "sims_neg": [[0.0]]})
        assert batch.tau == 0.05


class TestEmbeddingLoss:

    def test_single_example_hand_case(self):
        batch = EmbeddingBatch(sims_pos=np.array([[1.0]]),
                               sims_neg=np.array([[0.0]]), tau=1.0)
        result = embedding_contrastive_loss(batch)
        assert result.mean == pytest.approx(0.31326168751822286, abs=1e-9)
        assert result.per_example == [pytest.approx(math.log(1.0 + math.exp(-1.0)),
                                                    abs=1e-12)]

    @pytest.mark.parametrize("m", [1, 2, 4])
    @pytest.mark.parametrize("tau", [0.05, 1.0])
    def test_uniform_sims_give_log_2m(self, m, tau):
        batch = EmbeddingBatch(sims_pos=np.full((m, m), 0.3),
                               sims_neg=np.full((m, m), 0.3), tau=tau)
        result = embedding_contrastive_loss(batch)
        for value in result.per_example:
            assert value == pytest.approx(math.log(2 * m), abs=1e-12)
        assert result.mean == pytest.approx(math.log(2 * m), abs=1e-12)

    def test_raising_own_positive_drives_loss_to_zero(self):
        losses = []
        for s in (1.0, 3.0, 10.0, 30.0):
            batch = EmbeddingBatch(sims_pos=np.array([[s, 0.0], [0.0, s]]),
                                   sims_neg=np.zeros((2, 2)), tau=1.0)
            losses.append(embedding_contrastive_loss(batch).mean)
        assert losses == sorted(losses, reverse=True)
        assert losses[-1] < 1e-9

    @settings(max_examples=50, deadline=None)
    @given(_embedding_batches())
    def test_strictly_positive(self, batch):
        result = embedding_contrastive_loss(batch)
        assert all(v > 0.0 for v in result.per_example)
        assert result.mean == pytest.approx(
            math.fsum(result.per_example) / batch.batch_size, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(_embedding_batches(), st.floats(min_value=-3.0, max_value=3.0))
    def test_shift_invariance(self, batch, shift):
        shifted = EmbeddingBatch(sims_pos=batch.sims_pos + shift,
                                 sims_neg=batch.sims_neg + shift,
                                 tau=batch.tau)
        a = embedding_contrastive_loss(batch).per_example
        b = embedding_contrastive_loss(shifted).per_example
        assert b == pytest.approx(a, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(_embedding_batches())
    def test_strictly_decreasing_in_own_positive(self, batch):
        bumped_pos = batch.sims_pos.copy()
        bumped_pos[0, 0] += 0.5
        bumped = EmbeddingBatch(sims_pos=bumped_pos, sims_neg=batch.sims_neg,
                                tau=batch.tau)
        before = embedding_contrastive_loss(batch).per_example[0]
        after = embedding_contrastive_loss(bumped).per_example[0]
        assert after < before

    @settings(max_examples=50, deadline=None)
    @given(_embedding_batches())
    def test_logsumexp_matches_naive_form(self, batch):
        got = embedding_contrastive_loss(batch).per_example
        assert got == pytest.approx(_naive_embedding_losses(batch), abs=1e-9)


class TestEmbeddingGradients:

    @settings(max_examples=50, deadline=None)
    @given(_embedding_batches())
    def test_closed_form_matches_finite_differences(self, batch):
        grad_pos, grad_neg = embedding_contrastive_gradients(batch)
        fd_pos, fd_neg = embedding_loss_fd_gradients(batch)
        np.testing.assert_allclose(grad_pos, fd_pos, rtol=0.0, atol=1e-5)
        np.testing.assert_allclose(grad_neg, fd_neg, rtol=0.0, atol=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(_embedding_batches())
    def test_own_positive_gradient_is_negative(self, batch):
        grad_pos, _ = embedding_contrastive_gradients(batch)
        for i in range(batch.batch_size):
            assert grad_pos[i, i] < 0.0

    def test_exchangeable_negatives_share_gradients(self):
        batch = EmbeddingBatch(sims_pos=np.array([[0.9, 0.2], [0.2, 0.8]]),
                               sims_neg=np.full((2, 2), 0.1), tau=1.0)
        _, grad_neg = embedding_contrastive_gradients(batch)
        assert grad_neg[0, 0] == pytest.approx(grad_neg[0, 1], abs=1e-12)
        assert grad_neg[1, 0] == pytest.approx(grad_neg[1, 1], abs=1e-12)


def _naive_reranker_loss(batch: RerankBatch) -> float:
    denom = math.exp(batch.pos_score / batch.tau) + sum(
        math.exp(v / batch.tau) for v in batch.neg_scores)
    return -math.log(math.exp(batch.pos_score / batch.tau) / denom)


class TestRerankerLoss:

    def test_hand_case(self):
        batch = RerankBatch(pos_score=2.0, neg_scores=[0.0, 0.0, 0.0], tau=1.0)
        value = reranker_contrastive_loss(batch)
        assert value == pytest.approx(math.log(1.0 + 3.0 * math.exp(-2.0)),
                                      abs=1e-12)
        assert value == pytest.approx(0.3407529539131311, abs=1e-9)

    @pytest.mark.parametrize("m", [1, 3, 5])
    def test_uniform_scores_give_log_1_plus_m(self, m):
        batch = RerankBatch(pos_score=0.7, neg_scores=[0.7] * m, tau=0.05)
        assert reranker_contrastive_loss(batch) == pytest.approx(
            math.log(1 + m), abs=1e-12)

    def test_zero_negatives_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            RerankBatch(pos_score=1.0, neg_scores=[])

    def test_from_dict_defaults_tau(self):
        batch = RerankBatch.from_dict({"pos_score": 1.0, "neg_scores": [0.0]})
        assert batch.tau == 0.05

    @settings(max_examples=50, deadline=None)
    @given(_rerank_batches())
    def test_strictly_positive(self, batch):
        assert reranker_contrastive_loss(batch) > 0.0

    @settings(max_examples=50, deadline=None)
    @given(_rerank_batches(), st.floats(min_value=-3.0, max_value=3.0))
    def test_shift_invariance(self, batch, shift):
        shifted = RerankBatch(pos_score=batch.pos_score + shift,
                              neg_scores=[v + shift for v in batch.neg_scores],
                              tau=batch.tau)
        assert reranker_contrastive_loss(shifted) == pytest.approx(
            reranker_contrastive_loss(batch), abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(_rerank_batches())
    def test_strictly_decreasing_in_positive_score(self, batch):
        bumped = RerankBatch(pos_score=batch.pos_score + 0.5,
                             neg_scores=batch.neg_scores, tau=batch.tau)
        assert reranker_contrastive_loss(bumped) < reranker_contrastive_loss(batch)

    @settings(max_examples=50, deadline=None)
    @given(_rerank_batches())
    def test_logsumexp_matches_naive_form(self, batch):
        assert reranker_contrastive_loss(batch) == pytest.approx(
            _naive_reranker_loss(batch), abs=1e-9)


class TestRerankerGradients:

    def test_uniform_point_positive_gradient(self):
        batch = RerankBatch(pos_score=1.0, neg_scores=[1.0, 1.0, 1.0], tau=1.0)
        d_pos, d_negs = reranker_contrastive_gradients(batch)
        assert d_pos == pytest.approx(-0.75, abs=1e-12)
        assert d_negs == pytest.approx([0.25, 0.25, 0.25], abs=1e-12)
        fd_pos, fd_negs = reranker_loss_fd_gradients(batch)
        assert fd_pos == pytest.approx(-0.75, abs=1e-5)
        assert fd_negs == pytest.approx([0.25, 0.25, 0.25], abs=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(_rerank_batches())
    def test_closed_form_matches_finite_differences(self, batch):
        d_pos, d_negs = reranker_contrastive_gradients(batch)
        fd_pos, fd_negs = reranker_loss_fd_gradients(batch)
        assert d_pos == pytest.approx(fd_pos, abs=1e-5)
        assert d_negs == pytest.approx(fd_negs, abs=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(_rerank_batches())
    def test_gradient_signs(self, batch):
        d_pos, d_negs = reranker_contrastive_gradients(batch)
        assert d_pos < 0.0
        assert all(g > 0.0 for g in d_negs)


class TestAutoregressiveNll:

    def test_certain_predictions_cost_nothing(self):
        assert autoregressive_nll([1.0, 1.0, 1.0]) == 0.0

    def test_hand_case(self):
        assert autoregressive_nll([0.5, 0.25]) == pytest.approx(
            2.0794415416798357, abs=1e-12)

    def test_empty_sequence_is_zero(self):
        assert autoregressive_nll([]) == 0.0

    def test_accepts_wrapper_type(self):
        assert autoregressive_nll(
            TokenSequenceLikelihood(probs=[0.5])) == pytest.approx(
                math.log(2.0), abs=1e-12)

    def test_rejects_out_of_range_probabilities(self):
        for p in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError, match="probability"):
                autoregressive_nll([p])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(PROB, max_size=8), st.lists(PROB, max_size=8))
    def test_additive_over_concatenation(self, a, b):
        assert autoregressive_nll(a) + autoregressive_nll(b) == pytest.approx(
            autoregressive_nll(a + b), abs=1e-9)


class TestFiniteDifferenceGradient:

    def test_exact_for_quadratics(self):
        x0 = np.array([1.0, -2.0, 0.5])
        grad = finite_difference_gradient(lambda x: float(np.sum(x * x)), x0)
        np.testing.assert_allclose(grad, 2.0 * x0, rtol=0.0, atol=1e-9)

    def test_rejects_non_positive_step(self):
        with pytest.raises(ValueError, match="h"):
            finite_difference_gradient(lambda x: 0.0, np.zeros(2), h=0.0)
