"""Training-data builders: contrastive triplets by terminology substitution,
judge-labeled reranker examples, and generated instruction triplets.

All builders are deterministic under a fixed seed and fixture clients, and
every emitted record carries the version of the prompt that produced it.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

from .corpus import Chunk
from .generation import ChatClient
from .remote import TransportError
from .retrieval import Retriever
from .tokenizer import tokenize

logger = logging.getLogger(__name__)

DEFAULT_RERANK_POOL_LEXICAL_K = 10
DEFAULT_RERANK_POOL_SEMANTIC_K = 10
DEFAULT_INSTRUCT_POOL_SIZE = 10
DEFAULT_NEGATIVE_SAMPLE_SIZE = 3


class DatagenError(Exception):
    pass


class LabelParseError(Exception):
    """Judge/labeler output did not parse; the raw payload is retained."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass
class ContrastiveTriplet:
    query: str
    positive: str
    negative: str
    terminology: str
    substituted_terminology: str

    def to_record(self, prompt_version: str) -> dict:
        return {"query": self.query, "positive": self.positive,
                "negative": self.negative, "terminology": self.terminology,
                "substituted_terminology": self.substituted_terminology,
                "prompt_version": prompt_version}


@dataclass
class RerankerExample:
    question_id: str
    question: str
    positives: list[str]
    negatives: list[str]

    def to_record(self, prompt_version: str) -> dict:
        return {"question_id": self.question_id, "question": self.question,
                "positives": self.positives, "negatives": self.negatives,
                "prompt_version": prompt_version}


@dataclass
class InstructionTriplet:
    question: str
    reference_chunk_ids: list[str]
    answer: str

    def to_record(self, prompt_version: str) -> dict:
        return {"question": self.question,
                "reference_chunk_ids": self.reference_chunk_ids,
                "answer": self.answer, "prompt_version": prompt_version}


@dataclass
class LossSample:
    """Sampled ids for one reranker loss term: score them with a model to
    fill a rerank score batch."""

    question: str
    positive_chunk_id: str
    negative_chunk_ids: list[str]


def load_prompt(name: str) -> tuple[str, str]:
    """Load a versioned prompt asset by stem (e.g. "relevance_judge_v1");
    returns (text, version) with the version parsed from the stem suffix."""
    match = re.search(r"_(v\d+)$", name)
    if not match:
        raise ValueError(f"prompt name {name!r} lacks a _vN version suffix")
    text = resources.files("docrag").joinpath("prompts", f"{name}.txt") \
        .read_text(encoding="utf-8")
    return text, match.group(1)


def load_term_list(path: str | Path | None = None) -> list[str]:
    """Terminology list: packaged default or a caller-supplied file, one
    term per line, # comments skipped."""
    if path is None:
        raw = resources.files("docrag").joinpath("data", "eda_terms.txt") \
            .read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    terms = []
    for line in raw.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            terms.append(line)
    return terms


def _whole_word_pattern(term: str) -> re.Pattern:
    return re.compile(rf"(?<!\w){re.escape(term)}(?!\w)")


def make_negative_by_substitution(query: str, terminology: str,
                                  term_list: list[str],
                                  rng_seed: int | str) -> ContrastiveTriplet:
    """Negative = query with every whole-word occurrence of `terminology`
    replaced by a different term drawn uniformly (seeded) from `term_list`.
    The positive is left empty for a generator or fixture to fill.
    """
    pattern = _whole_word_pattern(terminology)
    if not pattern.search(query):
        raise DatagenError(
            f"terminology {terminology!r} does not occur in query {query!r}")
    alternatives = sorted(t for t in term_list if t != terminology)
    if not alternatives:
        raise DatagenError(
            f"term list has no alternative to {terminology!r}")
    substitute = random.Random(rng_seed).choice(alternatives)
    return ContrastiveTriplet(
        query=query, positive="",
        negative=pattern.sub(substitute, query),
        terminology=terminology, substituted_terminology=substitute)


@dataclass
class ContrastiveBuild:
    triplets: list[ContrastiveTriplet]
    skipped: list[tuple[str, str]] = field(default_factory=list)
    prompt_version: str = ""


def build_contrastive_dataset(query_terms: list[tuple[str, str]],
                              term_list: list[str],
                              generator_client: ChatClient,
                              seed: int = 0,
                              positive_mode: str = "answer") -> ContrastiveBuild:
    """Fill triplets for (query, terminology) pairs: negatives by seeded
    substitution, positives from the generator using the versioned prompt
    for the chosen mode ("answer" writes an answer to the query,
    "paraphrase" rewrites the query keeping the terminology).

    Generator transport failures skip the pair; output is canonically
    ordered by (query, terminology).
    """
    if positive_mode == "answer":
        prompt_text, version = load_prompt("positive_answer_v1")
    elif positive_mode == "paraphrase":
        prompt_text, version = load_prompt("positive_paraphrase_v1")
    else:
        raise ValueError(f"unknown positive_mode {positive_mode!r}")
    triplets: list[ContrastiveTriplet] = []
    skipped: list[tuple[str, str]] = []
    for query, terminology in sorted(set(query_terms)):
        try:
            triplet = make_negative_by_substitution(
                query, terminology, term_list,
                rng_seed=f"{seed}:{query}:{terminology}")
            prompt = prompt_text.format(query=query, terminology=terminology)
            triplet.positive = generator_client.complete(prompt).answer_text
        except (DatagenError, TransportError) as exc:
            logger.warning("skipping contrastive pair %r: %s", query, exc)
            skipped.append((query, str(exc)))
            continue
        triplets.append(triplet)
    return ContrastiveBuild(triplets=triplets, skipped=skipped,
                            prompt_version=version)


class RelevanceLabeler(Protocol):
    prompt_version: str

    def label(self, question_id: str, question: str, chunk_id: str,
              chunk_text: str) -> bool: ...


class FixtureRelevanceLabeler:
    """Labels a candidate positive iff its id is in the per-question set."""

    prompt_version = "fixture"

    def __init__(self, positive_ids_by_question: dict[str, set[str]]):
        self.positive_ids_by_question = positive_ids_by_question

    def label(self, question_id: str, question: str, chunk_id: str,
              chunk_text: str) -> bool:
        return chunk_id in self.positive_ids_by_question.get(question_id, set())


class LlmRelevanceLabeler:
    """Asks a chat model yes/no per candidate using the versioned judge prompt."""

    def __init__(self, client: ChatClient, prompt_name: str = "relevance_judge_v1"):
        self.client = client
        self.prompt_text, self.prompt_version = load_prompt(prompt_name)

    def label(self, question_id: str, question: str, chunk_id: str,
              chunk_text: str) -> bool:
        prompt = self.prompt_text.format(question=question, chunk_id=chunk_id,
                                         chunk_text=chunk_text)
        raw = self.client.complete(prompt).answer_text
        first = raw.strip().split()[0].lower().strip(".,!") if raw.strip() else ""
        if first in ("yes", "no"):
            return first == "yes"
        raise LabelParseError(f"labeler reply is not yes/no: {raw[:80]!r}", raw=raw)


@dataclass
class RerankerBuild:
    examples: list[RerankerExample]
    skipped: list[tuple[str, str]] = field(default_factory=list)
    prompt_version: str = ""


def build_reranker_dataset(questions: list[tuple[str, str]],
                           retriever: Retriever,
                           labeler: RelevanceLabeler,
                           chunk_texts: dict[str, str],
                           lexical_k: int = DEFAULT_RERANK_POOL_LEXICAL_K,
                           semantic_k: int = DEFAULT_RERANK_POOL_SEMANTIC_K) -> RerankerBuild:
    """Per (question_id, question): hybrid retrieve lexical_k + semantic_k
    candidates, dedup, label each candidate, partition into positives and
    negatives. Questions with no positives are dropped with a logged
    reason; labeler transport failures skip the question and are counted.
    Output is canonically ordered by question id.
    """
    saved_lex, saved_sem = retriever.lexical_k, retriever.semantic_k
    retriever.lexical_k, retriever.semantic_k = lexical_k, semantic_k
    try:
        examples: list[RerankerExample] = []
        skipped: list[tuple[str, str]] = []
        for qid, question in sorted(questions):
            candidates = retriever.retrieve(question, mode="hybrid")
            positives: list[str] = []
            negatives: list[str] = []
            try:
                for cand in candidates:
                    relevant = labeler.label(qid, question, cand.chunk_id,
                                             chunk_texts[cand.chunk_id])
                    (positives if relevant else negatives).append(cand.chunk_id)
            except TransportError as exc:
                logger.warning("skipping question %s: labeler failed (%s)", qid, exc)
                skipped.append((qid, f"labeler transport failure: {exc}"))
                continue
            if not positives:
                logger.info("dropping question %s: no positive candidates", qid)
                skipped.append((qid, "no positive candidates"))
                continue
            examples.append(RerankerExample(
                question_id=qid, question=question,
                positives=sorted(positives), negatives=sorted(negatives)))
        return RerankerBuild(examples=examples, skipped=skipped,
                             prompt_version=labeler.prompt_version)
    finally:
        retriever.lexical_k, retriever.semantic_k = saved_lex, saved_sem


def sample_loss_batch(example: RerankerExample,
                      m: int = DEFAULT_NEGATIVE_SAMPLE_SIZE,
                      rng_seed: int | str = 0) -> LossSample:
    """Seeded uniform sampling without replacement of one positive and m
    negatives from a labeled example."""
    if not example.positives:
        raise DatagenError(f"example {example.question_id} has no positives")
    if len(example.negatives) < m:
        raise DatagenError(
            f"example {example.question_id} has {len(example.negatives)} "
            f"negatives, need {m}")
    rng = random.Random(rng_seed)
    positive = rng.choice(sorted(example.positives))
    negatives = rng.sample(sorted(example.negatives), m)
    return LossSample(question=example.question, positive_chunk_id=positive,
                      negative_chunk_ids=negatives)


@dataclass
class InstructionBuild:
    triplets: list[InstructionTriplet]
    dropped: list[tuple[int, str]] = field(default_factory=list)
    prompt_version: str = ""


def build_instruction_prompt(prompt_text: str, pool: list[Chunk]) -> str:
    blocks = [f"[{chunk.id}]\n{chunk.text}" for chunk in pool]
    return prompt_text.format(documents="\n\n".join(blocks))


def _extract_json_object(text: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        start, end = text.find("{"), text.rfind("}")
        if start < 0 or end <= start:
            raise LabelParseError("no JSON object in generator output", raw=text)
        try:
            value = json.loads(text[start:end + 1])
        except json.JSONDecodeError:
            raise LabelParseError("generator output is not valid JSON", raw=text)
    if not isinstance(value, dict):
        raise LabelParseError("generator output is not a JSON object", raw=text)
    return value


def validate_instruction_triplet(payload: dict,
                                 pool_ids: set[str]) -> InstructionTriplet:
    """Schema gate for generator output: non-empty question and answer,
    reference ids a non-empty subset of the sampled pool."""
    question = payload.get("question")
    refs = payload.get("reference_chunk_ids")
    answer = payload.get("answer")
    if not isinstance(question, str) or not question.strip():
        raise DatagenError("generated question missing or empty")
    if not isinstance(answer, str) or not answer.strip():
        raise DatagenError("generated answer missing or empty")
    if (not isinstance(refs, list) or not refs
            or not all(isinstance(r, str) for r in refs)):
        raise DatagenError("reference_chunk_ids missing or empty")
    outside = [r for r in refs if r not in pool_ids]
    if outside:
        raise DatagenError(f"reference ids outside sampled pool: {outside}")
    return InstructionTriplet(question=question.strip(),
                              reference_chunk_ids=list(refs),
                              answer=answer.strip())


def build_instruction_dataset(chunks: list[Chunk],
                              generator_client: ChatClient,
                              count: int,
                              pool_size: int = DEFAULT_INSTRUCT_POOL_SIZE,
                              seed: int = 0,
                              reasks: int = 1) -> InstructionBuild:
    """Generate `count` question/reference/answer triplets, each grounded
    in a freshly sampled pool of chunks. Outputs failing schema validation
    are re-asked up to `reasks` times, then dropped and counted. Output is
    canonically ordered by question text.
    """
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    prompt_text, version = load_prompt("instruct_gen_v1")
    ordered = sorted(chunks, key=lambda c: c.id)
    if len(ordered) < pool_size:
        raise DatagenError(
            f"chunk store has {len(ordered)} chunks, pool needs {pool_size}")
    rng = random.Random(seed)
    triplets: list[InstructionTriplet] = []
    dropped: list[tuple[int, str]] = []
    for i in range(count):
        pool = rng.sample(ordered, pool_size)
        pool_ids = {c.id for c in pool}
        prompt = build_instruction_prompt(prompt_text, pool)
        reason = "no attempts made"
        for _ in range(1 + reasks):
            try:
                raw = generator_client.complete(prompt).answer_text
                triplets.append(validate_instruction_triplet(
                    _extract_json_object(raw), pool_ids))
                reason = ""
                break
            except (DatagenError, LabelParseError, TransportError) as exc:
                reason = str(exc)
        if reason:
            logger.warning("dropping instruction triplet %d: %s", i, reason)
            dropped.append((i, reason))
    triplets.sort(key=lambda t: t.question)
    return InstructionBuild(triplets=triplets, dropped=dropped,
                            prompt_version=version)


def save_records_jsonl(records: list, path: str | Path,
                       prompt_version: str) -> None:
    """Write one sorted-key JSON object per line; deterministic bytes for
    identical inputs."""
    lines = [json.dumps(r.to_record(prompt_version), sort_keys=True,
                        ensure_ascii=False)
             for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")
