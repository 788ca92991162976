"""Shared tokenization: the single authority used by indexing, metrics and chunk stats.

Scheme: lowercase, split on whitespace and punctuation, keep underscores so
tool command names like ``place_pin`` survive as single tokens. Punctuation
never becomes a token.
"""

from __future__ import annotations

import re

_WORD_RE = re.compile(r"\w+", re.UNICODE)
_SLUG_RE = re.compile(r"[^\w]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Split text into lowercased word tokens (underscores kept intact)."""
    return _WORD_RE.findall(text.lower())


def count_tokens(text: str) -> int:
    """Number of tokens under the shared scheme; empty text counts 0."""
    return len(tokenize(text))


def slugify(text: str) -> str:
    """Lowercased identifier-safe slug used for chunk ids."""
    slug = _SLUG_RE.sub("-", text.lower()).strip("-")
    return slug or "untitled"
