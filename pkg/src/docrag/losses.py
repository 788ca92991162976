"""Reference calculators for the three training objectives: in-batch
embedding contrastive loss, reranker contrastive loss, and autoregressive
negative log-likelihood, with closed-form gradients and a finite-difference
checker. All logarithms are natural."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_EMBEDDING_TAU = 0.05
DEFAULT_RERANKER_TAU = 0.05
DEFAULT_RERANKER_NEGATIVES = 3
DEFAULT_FD_STEP = 1e-4


@dataclass
class EmbeddingBatch:
    """In-batch contrastive inputs: sims_pos[i, j] = sim(x_i, x_j_pos),
    sims_neg[i, j] = sim(x_i, x_j_neg); each row's denominator sums over
    both matrices' row entries, the diagonal of sims_pos is the target.

    Cosine similarities normally lie in [-1, 1]; the calculator only
    requires finite values so limit behaviour stays checkable.
    """

    sims_pos: np.ndarray
    sims_neg: np.ndarray
    tau: float = DEFAULT_EMBEDDING_TAU

    def __post_init__(self):
        self.sims_pos = np.asarray(self.sims_pos, dtype=np.float64)
        self.sims_neg = np.asarray(self.sims_neg, dtype=np.float64)
        m = self.sims_pos.shape[0] if self.sims_pos.ndim == 2 else 0
        if self.sims_pos.shape != (m, m) or m < 1:
            raise ValueError(f"sims_pos must be square MxM with M >= 1, "
                             f"got shape {self.sims_pos.shape}")
        if self.sims_neg.shape != (m, m):
            raise ValueError(f"sims_neg shape {self.sims_neg.shape} must "
                             f"match sims_pos shape {(m, m)}")
        if not (np.isfinite(self.sims_pos).all()
                and np.isfinite(self.sims_neg).all()):
            raise ValueError("similarities must be finite")
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")

    @property
    def batch_size(self) -> int:
        return self.sims_pos.shape[0]

    @classmethod
    def from_dict(cls, payload: dict) -> "EmbeddingBatch":
        return cls(sims_pos=np.array(payload["sims_pos"], dtype=np.float64),
                   sims_neg=np.array(payload["sims_neg"], dtype=np.float64),
                   tau=float(payload.get("tau", DEFAULT_EMBEDDING_TAU)))


@dataclass
class RerankBatch:
    """One query's scores: the positive document's score and m >= 1
    negative document scores."""

    pos_score: float
    neg_scores: list[float]
    tau: float = DEFAULT_RERANKER_TAU

    def __post_init__(self):
        if len(self.neg_scores) < 1:
            raise ValueError("at least one negative score is required")
        values = [self.pos_score, *self.neg_scores]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("scores must be finite")
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")

    @classmethod
    def from_dict(cls, payload: dict) -> "RerankBatch":
        return cls(pos_score=float(payload["pos_score"]),
                   neg_scores=[float(v) for v in payload["neg_scores"]],
                   tau=float(payload.get("tau", DEFAULT_RERANKER_TAU)))


@dataclass
class TokenSequenceLikelihood:
    """Per-token conditional probabilities P(x_t | x_<t), each in (0, 1]."""

    probs: list[float] = field(default_factory=list)

    def __post_init__(self):
        for p in self.probs:
            if not (0.0 < p <= 1.0) or not math.isfinite(p):
                raise ValueError(f"token probability {p} outside (0, 1]")

    @classmethod
    def from_dict(cls, payload: dict) -> "TokenSequenceLikelihood":
        return cls(probs=[float(p) for p in payload["probs"]])


@dataclass
class EmbeddingLossResult:
    per_example: list[float]
    mean: float


def _logsumexp(values: np.ndarray) -> float:
    peak = float(np.max(values))
    return peak + math.log(float(np.sum(np.exp(values - peak))))


def embedding_contrastive_loss(batch: EmbeddingBatch) -> EmbeddingLossResult:
    """Per-example losses
    -log(e^{sim(x_i,x_i+)/tau} / sum_j(e^{sim(x_i,x_j+)/tau} + e^{sim(x_i,x_j-)/tau}))
    via log-sum-exp, plus their mean."""
    per_example = []
    for i in range(batch.batch_size):
        row = np.concatenate([batch.sims_pos[i], batch.sims_neg[i]]) / batch.tau
        per_example.append(_logsumexp(row) - batch.sims_pos[i, i] / batch.tau)
    return EmbeddingLossResult(per_example=per_example,
                               mean=math.fsum(per_example) / batch.batch_size)


def embedding_contrastive_gradients(batch: EmbeddingBatch) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form gradients of the MEAN loss w.r.t. sims_pos and sims_neg:
    row i is (softmax over the 2M row terms - indicator of the diagonal
    positive) / (tau * M), split back into the two matrices."""
    m = batch.batch_size
    grad_pos = np.zeros((m, m))
    grad_neg = np.zeros((m, m))
    for i in range(m):
        row = np.concatenate([batch.sims_pos[i], batch.sims_neg[i]]) / batch.tau
        shifted = np.exp(row - np.max(row))
        softmax = shifted / np.sum(shifted)
        grad_pos[i] = softmax[:m] / (batch.tau * m)
        grad_pos[i, i] -= 1.0 / (batch.tau * m)
        grad_neg[i] = softmax[m:] / (batch.tau * m)
    return grad_pos, grad_neg


def reranker_contrastive_loss(batch: RerankBatch) -> float:
    """-log(e^{pos/tau} / (e^{pos/tau} + sum_j e^{neg_j/tau})) via log-sum-exp."""
    scores = np.array([batch.pos_score, *batch.neg_scores]) / batch.tau
    return _logsumexp(scores) - batch.pos_score / batch.tau


def reranker_contrastive_gradients(batch: RerankBatch) -> tuple[float, list[float]]:
    """Closed-form (d loss / d pos_score, [d loss / d neg_j]):
    (softmax_pos - 1) / tau and softmax_neg_j / tau."""
    scores = np.array([batch.pos_score, *batch.neg_scores]) / batch.tau
    shifted = np.exp(scores - np.max(scores))
    softmax = shifted / np.sum(shifted)
    return (float(softmax[0] - 1.0) / batch.tau,
            [float(s) / batch.tau for s in softmax[1:]])


def autoregressive_nll(seq: TokenSequenceLikelihood | Sequence[float]) -> float:
    """Negative sum of log conditional probabilities; 0 for an empty
    sequence and additive over concatenation."""
    probs = seq.probs if isinstance(seq, TokenSequenceLikelihood) \
        else TokenSequenceLikelihood(probs=list(seq)).probs
    return -math.fsum(math.log(p) for p in probs)


def finite_difference_gradient(loss_fn: Callable[[np.ndarray], float],
                               x0: np.ndarray,
                               h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference partial derivatives of a scalar function of a
    flat vector: (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate."""
    if h <= 0.0:
        raise ValueError(f"h must be > 0, got {h}")
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    for k in range(x0.size):
        bump = np.zeros_like(x0)
        bump.flat[k] = h
        grad.flat[k] = (loss_fn(x0 + bump) - loss_fn(x0 - bump)) / (2.0 * h)
    return grad


def embedding_loss_fd_gradients(batch: EmbeddingBatch,
                                h: float = DEFAULT_FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference estimates shaped like the closed-form gradients."""
    m = batch.batch_size

    def loss_of(flat: np.ndarray) -> float:
        sims = flat.reshape(2, m, m)
        return embedding_contrastive_loss(EmbeddingBatch(
            sims_pos=sims[0], sims_neg=sims[1], tau=batch.tau)).mean

    flat0 = np.stack([batch.sims_pos, batch.sims_neg]).ravel()
    grad = finite_difference_gradient(loss_of, flat0, h).reshape(2, m, m)
    return grad[0], grad[1]


def reranker_loss_fd_gradients(batch: RerankBatch,
                               h: float = DEFAULT_FD_STEP) -> tuple[float, list[float]]:
    """Finite-difference estimates shaped like the closed-form gradients."""

    def loss_of(flat: np.ndarray) -> float:
        return reranker_contrastive_loss(RerankBatch(
            pos_score=float(flat[0]), neg_scores=[float(v) for v in flat[1:]],
            tau=batch.tau))

    flat0 = np.array([batch.pos_score, *batch.neg_scores], dtype=np.float64)
    grad = finite_difference_gradient(loss_of, flat0, h)
    return float(grad[0]), [float(v) for v in grad[1:]]
