"""Pipeline configuration: nested dataclasses, lossless JSON round-trip,
and a stable content hash recorded in every report and response."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlparse

DEFAULT_LEXICAL_K = 20
DEFAULT_SEMANTIC_K = 20
DEFAULT_RERANK_K = 5
DEFAULT_RRF_CONST = 60
DEFAULT_TOKEN_BUDGET = 4096
DEFAULT_NOT_FOUND_TEXT = ("The question cannot be answered from the provided "
                          "documentation: no relevant sections were retrieved.")

OVERRIDABLE_KEYS = ("lexical_k", "semantic_k", "rerank_k", "rrf_const",
                    "token_budget", "rerank_backend")


class ConfigError(Exception):
    pass


def _require_url(value: str, what: str) -> None:
    parsed = urlparse(value)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise ConfigError(f"{what} must be an http(s) URL, got {value!r}")


@dataclass
class PathsConfig:
    chunk_store: str = "artifacts/chunks.jsonl"
    lexical_index: str = "artifacts/lexical.json"
    vector_store: str = "artifacts/vectors.npz"


@dataclass
class LexicalConfig:
    engine: str = "bm25"
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.engine not in ("bm25", "tfidf"):
            raise ConfigError(f"unknown lexical engine {self.engine!r}")


@dataclass
class EmbeddingConfig:
    provider: str = "hash"
    endpoint: str = ""
    model: str = ""
    dim: int = 64

    def __post_init__(self):
        if self.provider not in ("hash", "remote"):
            raise ConfigError(f"unknown embedding provider {self.provider!r}")
        if self.provider == "remote":
            _require_url(self.endpoint, "embedding endpoint")
        if self.dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.dim}")


@dataclass
class RerankConfig:
    backend: str = "embedding"
    endpoint: str = ""
    model: str = ""
    fallback_to_rrf: bool = True

    def __post_init__(self):
        if self.backend not in ("rrf", "embedding", "remote"):
            raise ConfigError(f"unknown rerank backend {self.backend!r}")
        if self.backend == "remote":
            _require_url(self.endpoint, "rerank endpoint")


@dataclass
class GeneratorConfig:
    provider: str = "remote"
    endpoint: str = "http://localhost:8000"
    model: str = ""
    temperature: float = 0.0
    max_tokens: int | None = None
    canned_answers_path: str = ""
    canned_key: str = "hash"

    def __post_init__(self):
        if self.provider not in ("remote", "canned"):
            raise ConfigError(f"unknown generator provider {self.provider!r}")
        if self.provider == "remote":
            _require_url(self.endpoint, "generator endpoint")
        if self.canned_key not in ("hash", "question"):
            raise ConfigError(f"unknown canned_key {self.canned_key!r}")


@dataclass
class JudgeConfig:
    provider: str = "none"
    endpoint: str = ""

    def __post_init__(self):
        if self.provider not in ("none", "remote", "overlap"):
            raise ConfigError(f"unknown judge provider {self.provider!r}")
        if self.provider == "remote":
            _require_url(self.endpoint, "judge endpoint")


@dataclass
class LimitsConfig:
    timeout_s: float = 30.0
    retries: int = 2
    concurrency: int = 1

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be > 0, got {self.timeout_s}")
        if self.retries < 0:
            raise ConfigError(f"retries must be >= 0, got {self.retries}")
        if self.concurrency < 1:
            raise ConfigError(f"concurrency must be >= 1, got {self.concurrency}")


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    lexical: LexicalConfig = field(default_factory=LexicalConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    rerank: RerankConfig = field(default_factory=RerankConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    limits: LimitsConfig = field(default_factory=LimitsConfig)
    lexical_k: int = DEFAULT_LEXICAL_K
    semantic_k: int = DEFAULT_SEMANTIC_K
    rerank_k: int = DEFAULT_RERANK_K
    rrf_const: int = DEFAULT_RRF_CONST
    token_budget: int = DEFAULT_TOKEN_BUDGET
    not_found_text: str = DEFAULT_NOT_FOUND_TEXT

    def __post_init__(self):
        for name in ("lexical_k", "semantic_k", "rerank_k", "token_budget"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.rrf_const < 1:
            raise ConfigError(f"rrf_const must be >= 1, got {self.rrf_const}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        kwargs = dict(payload)
        for name, sub in (("paths", PathsConfig), ("lexical", LexicalConfig),
                          ("embedding", EmbeddingConfig), ("rerank", RerankConfig),
                          ("generator", GeneratorConfig), ("judge", JudgeConfig),
                          ("limits", LimitsConfig)):
            if name in kwargs and isinstance(kwargs[name], dict):
                kwargs[name] = sub(**kwargs[name])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad config payload: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        """New config with a restricted set of keys replaced (k values,
        budgets, rerank backend); unknown keys are rejected."""
        if not overrides:
            return self
        unknown = sorted(set(overrides) - set(OVERRIDABLE_KEYS))
        if unknown:
            raise ConfigError(f"overrides not permitted: {', '.join(unknown)}")
        payload = self.to_dict()
        for key, value in overrides.items():
            if key == "rerank_backend":
                payload["rerank"]["backend"] = value
            else:
                payload[key] = int(value)
        return PipelineConfig.from_dict(payload)
