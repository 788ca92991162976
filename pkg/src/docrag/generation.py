"""Prompt assembly and chat-completion clients (remote and canned)."""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .corpus import Chunk
from .remote import post_json
from .tokenizer import count_tokens

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_BUDGET = 4096
NO_DOCUMENTS_MARKER = "(no reference documents)"

DEFAULT_SYSTEM_TEXT = (
    "You are a documentation assistant for an electronic design automation "
    "tool. Answer the question using only the reference documents provided "
    "below. If the documents do not contain the answer, reply that the "
    "question cannot be answered from the provided documentation.")


class GenerationError(Exception):
    """A completion violated the generation contract (for example, empty text)."""


class PromptBudgetError(Exception):
    """Even the chunk-free prompt exceeds the token budget."""

    def __init__(self, message: str, dropped_chunk_ids: list[str]):
        super().__init__(message)
        self.dropped_chunk_ids = dropped_chunk_ids


@dataclass
class PromptTemplate:
    system_text: str = DEFAULT_SYSTEM_TEXT
    document_block_format: str = "Document [{index}] ({chunk_id}):\n{body}"
    question_prefix: str = "Question: "


@dataclass
class PromptBuild:
    text: str
    token_estimate: int
    dropped_chunk_ids: list[str] = field(default_factory=list)


@dataclass
class GenerationResult:
    answer_text: str
    model_name: str
    prompt_token_count: int
    completion_token_count: int
    latency_ms: int


def _render(template: PromptTemplate, question: str,
            chunks: list[Chunk]) -> str:
    parts = [template.system_text, ""]
    if chunks:
        for i, chunk in enumerate(chunks, start=1):
            parts.append(template.document_block_format.format(
                index=i, chunk_id=chunk.id, body=chunk.text))
            parts.append("")
    else:
        parts.append(NO_DOCUMENTS_MARKER)
        parts.append("")
    parts.append(f"{template.question_prefix}{question}")
    return "\n".join(parts)


def build_prompt(template: PromptTemplate, question: str, chunks: list[Chunk],
                 token_budget: int = DEFAULT_TOKEN_BUDGET) -> PromptBuild:
    """Render the QA prompt, dropping lowest-ranked chunks until the
    rendering fits the token budget.

    `chunks` must arrive in final rerank order (best first); drops start
    from the end and are reported in the result. If even the chunk-free
    prompt overflows, a budget error carries every dropped id.
    """
    if token_budget < 1:
        raise ValueError(f"token_budget must be >= 1, got {token_budget}")
    kept = list(chunks)
    dropped: list[str] = []
    while True:
        text = _render(template, question, kept)
        estimate = count_tokens(text)
        if estimate <= token_budget:
            if dropped:
                logger.warning("prompt over %d tokens; dropped chunks: %s",
                               token_budget, ", ".join(dropped))
            return PromptBuild(text=text, token_estimate=estimate,
                               dropped_chunk_ids=dropped)
        if not kept:
            raise PromptBudgetError(
                f"prompt exceeds token budget {token_budget} even without "
                f"reference chunks ({estimate} tokens)", dropped)
        dropped.append(kept.pop().id)


class ChatClient(Protocol):
    model_name: str

    def complete(self, prompt: str) -> GenerationResult: ...


class RemoteChatClient:
    """Chat client against an OpenAI-compatible /v1/chat/completions endpoint.

    Sends the rendered prompt as a single user message at temperature 0.
    The API key, if any, is read from the environment at request time.
    """

    def __init__(self, base_url: str, model_name: str,
                 temperature: float = 0.0, max_tokens: int | None = None,
                 timeout: float = 60.0, retries: int = 2,
                 api_key_env: str = "DOCRAG_API_KEY", post_fn=None):
        self.base_url = base_url.rstrip("/")
        self.model_name = model_name
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.retries = retries
        self.api_key_env = api_key_env
        self._post_fn = post_fn

    def _headers(self) -> dict[str, str] | None:
        key = os.environ.get(self.api_key_env) or os.environ.get("OPENAI_API_KEY")
        return {"Authorization": f"Bearer {key}"} if key else None

    def complete(self, prompt: str) -> GenerationResult:
        payload: dict = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        started = time.perf_counter()
        body = post_json(f"{self.base_url}/v1/chat/completions", payload,
                         timeout=self.timeout, retries=self.retries,
                         headers=self._headers(), post_fn=self._post_fn)
        latency_ms = int((time.perf_counter() - started) * 1000)
        try:
            answer = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GenerationError(f"malformed completion response: {exc}") from exc
        if not answer or not answer.strip():
            raise GenerationError("completion contained no text")
        usage = body.get("usage") or {}
        return GenerationResult(
            answer_text=answer,
            model_name=body.get("model", self.model_name),
            prompt_token_count=int(usage.get("prompt_tokens",
                                             count_tokens(prompt))),
            completion_token_count=int(usage.get("completion_tokens",
                                                 count_tokens(answer))),
            latency_ms=latency_ms,
        )


def prompt_key(prompt: str) -> str:
    """Stable lookup key for canned answers: sha256 of the prompt text."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CannedChatClient:
    """Offline chat client answering from a fixed mapping.

    Keys default to sha256 prompt hashes; pass `key_fn` to key on something
    looser (for example the question line) when exact prompt bytes are
    awkward to predict in fixtures.
    """

    def __init__(self, answers: dict[str, str],
                 key_fn: Callable[[str], str] = prompt_key,
                 default_answer: str | None = None,
                 model_name: str = "canned"):
        self.answers = dict(answers)
        self.key_fn = key_fn
        self.default_answer = default_answer
        self.model_name = model_name

    def complete(self, prompt: str) -> GenerationResult:
        answer = self.answers.get(self.key_fn(prompt), self.default_answer)
        if answer is None:
            raise GenerationError(
                f"no canned answer for key {self.key_fn(prompt)!r}")
        if not answer.strip():
            raise GenerationError("completion contained no text")
        return GenerationResult(
            answer_text=answer,
            model_name=self.model_name,
            prompt_token_count=count_tokens(prompt),
            completion_token_count=count_tokens(answer),
            latency_ms=0,
        )


def generate_answer(client: ChatClient, prompt: str) -> GenerationResult:
    return client.complete(prompt)
