"""Answer-quality metrics: recall@k, single-reference BLEU, ROUGE-L, and an
adapter for an external factual-consistency judge."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .remote import TransportError, post_json
from .tokenizer import tokenize

DEFAULT_MAX_N = 4


class UndefinedMetricError(Exception):
    """The metric has no value for this input (e.g. empty reference)."""


@dataclass
class MetricScore:
    name: str
    value: float
    details: dict = field(default_factory=dict)


def _as_tokens(text_or_tokens: Sequence[str] | str) -> list[str]:
    if isinstance(text_or_tokens, str):
        return tokenize(text_or_tokens)
    return list(text_or_tokens)


def recall_at_k(relevant_ids: set[str], retrieved_ids: Sequence[str],
                k: int) -> float:
    """|relevant intersect first-k retrieved| / |relevant|."""
    if not relevant_ids:
        raise UndefinedMetricError("recall@k undefined for empty relevant set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hit = len(relevant_ids.intersection(retrieved_ids[:k]))
    return hit / len(relevant_ids)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str] | str, reference: Sequence[str] | str,
         max_n: int = DEFAULT_MAX_N) -> MetricScore:
    """Single-reference BLEU without smoothing.

    Uniform weights over n = 1..N_eff with N_eff = min(max_n, candidate
    length); any zero clipped precision forces a zero score; brevity
    penalty is 1 when the candidate is longer than the reference, else
    exp(1 - r/c). Empty candidates score 0 under a BP = 0 convention.
    """
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not ref:
        raise UndefinedMetricError("BLEU undefined for empty reference")
    if not cand:
        return MetricScore("bleu", 0.0, details={
            "brevity_penalty": 0.0, "precisions": [],
            "candidate_length": 0, "reference_length": len(ref)})
    n_eff = min(max_n, len(cand))
    precisions = []
    for n in range(1, n_eff + 1):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        clipped = sum(min(count, ref_counts[gram])
                      for gram, count in cand_counts.items())
        precisions.append(clipped / sum(cand_counts.values()))
    c, r = len(cand), len(ref)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    if any(p == 0.0 for p in precisions):
        value = 0.0
    else:
        value = bp * math.exp(sum(math.log(p) for p in precisions) / n_eff)
    return MetricScore("bleu", value, details={
        "brevity_penalty": bp, "precisions": precisions,
        "candidate_length": c, "reference_length": r})


def _lcs_length(xs: list[str], ys: list[str]) -> int:
    """Longest common subsequence length by row-rolling dynamic programming."""
    if not xs or not ys:
        return 0
    prev = [0] * (len(ys) + 1)
    for x in xs:
        row = [0]
        for j, y in enumerate(ys, start=1):
            if x == y:
                row.append(prev[j - 1] + 1)
            else:
                row.append(max(prev[j], row[j - 1]))
        prev = row
    return prev[-1]


def rouge_l(candidate: Sequence[str] | str, reference: Sequence[str] | str,
            beta: float = 1.0) -> MetricScore:
    """LCS-based F measure: recall = LCS/|reference|, precision =
    LCS/|candidate|, F = (1 + beta^2) R P / (R + beta^2 P)."""
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not ref:
        raise UndefinedMetricError("ROUGE-L undefined for empty reference")
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return MetricScore("rouge_l", 0.0, details={
            "lcs_length": 0, "precision": 0.0, "recall": 0.0})
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    value = (1.0 + beta * beta) * recall * precision / (recall + beta * beta * precision)
    return MetricScore("rouge_l", value, details={
        "lcs_length": lcs, "precision": precision, "recall": recall})


class JudgeClient(Protocol):
    name: str

    def judge(self, question: str, answer: str, reference: str) -> float: ...


class RemoteJudgeClient:
    """Adapter for an external consistency judge service."""

    def __init__(self, base_url: str, name: str = "remote-judge",
                 timeout: float = 30.0, post_fn=None):
        self.base_url = base_url.rstrip("/")
        self.name = name
        self.timeout = timeout
        self._post_fn = post_fn

    def judge(self, question: str, answer: str, reference: str) -> float:
        body = post_json(f"{self.base_url}/judge",
                         {"question": question, "answer": answer,
                          "reference": reference},
                         timeout=self.timeout, post_fn=self._post_fn)
        try:
            value = float(body["consistency"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed judge response: {body!r}") from exc
        if not 0.0 <= value <= 1.0:
            raise TransportError(f"judge score {value} outside [0, 1]")
        return value


class ConstantJudge:
    """Fixture judge returning a fixed score for every record."""

    def __init__(self, value: float, name: str = "constant-judge"):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"judge score must lie in [0, 1], got {value}")
        self.value = value
        self.name = name

    def judge(self, question: str, answer: str, reference: str) -> float:
        return self.value


class LexicalOverlapJudge:
    """Offline judge scoring answers by ROUGE-L against the reference;
    identical token sequences score exactly 1.0."""

    name = "lexical-overlap"

    def judge(self, question: str, answer: str, reference: str) -> float:
        if not tokenize(reference):
            raise UndefinedMetricError("judge reference has no tokens")
        return rouge_l(answer, reference).value


def judge_consistency(judge_client: JudgeClient, question: str, answer: str,
                      reference_answer: str) -> float:
    """Scalar consistency score in [0, 1] from the configured judge.

    Transport failures propagate; callers mark the record's judge metric
    unavailable rather than recording a silent zero.
    """
    value = judge_client.judge(question, answer, reference_answer)
    if not 0.0 <= value <= 1.0:
        raise TransportError(f"judge score {value} outside [0, 1]")
    return value
