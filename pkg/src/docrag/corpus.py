"""Markdown ingestion: section-based chunking and the JSON-lines chunk store."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .tokenizer import count_tokens, slugify

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 2


class ChunkStoreError(Exception):
    """Raised when the chunk store cannot be written or read."""


class ChunkParseError(ChunkStoreError):
    """Raised for a malformed chunk-store record; carries the line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass
class Document:
    source_path: str
    raw: str


@dataclass
class Chunk:
    id: str
    source_path: str
    heading_path: list[str]
    text: str
    token_count: int = field(default=-1)

    def __post_init__(self):
        if self.token_count < 0:
            self.token_count = count_tokens(self.text)


_FENCES = ("```", "~~~")


def _heading_level(line: str) -> tuple[int, str] | None:
    """Return (depth, title) for an ATX heading line, else None."""
    stripped = line.lstrip()
    if not stripped.startswith("#"):
        return None
    hashes = len(stripped) - len(stripped.lstrip("#"))
    if hashes > 6:
        return None
    rest = stripped[hashes:]
    if rest and not rest[0].isspace():
        return None  # "#tag" is not a heading
    title = rest.strip().rstrip("#").strip()
    return hashes, title


def segment_markdown(doc: Document, max_depth: int = DEFAULT_MAX_DEPTH) -> list[Chunk]:
    """Split a markdown document into chunks at headings of depth <= max_depth.

    Deeper headings stay inside their parent chunk; text before the first
    heading becomes a chunk rooted at the source path. Headings inside fenced
    code blocks are treated as body text.
    """
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")

    sections: list[tuple[list[str], list[str]]] = []  # (heading_path, lines)
    current_lines: list[str] = []
    current_path = [doc.source_path]
    path_stack: list[str] = []
    in_fence = False
    fence_marker = ""

    def flush():
        if any(line.strip() for line in current_lines):
            sections.append((list(current_path), list(current_lines)))

    for line in doc.raw.splitlines():
        stripped = line.strip()
        if in_fence:
            current_lines.append(line)
            if stripped.startswith(fence_marker):
                in_fence = False
            continue
        if stripped.startswith(_FENCES):
            in_fence = True
            fence_marker = stripped[:3]
            current_lines.append(line)
            continue

        heading = _heading_level(line)
        if heading is not None and heading[0] <= max_depth:
            depth, title = heading
            flush()
            current_lines = [line]
            if depth > len(path_stack) + 1:
                if not path_stack:
                    logger.warning(
                        "%s: level-%d heading %r before any level-1 heading; "
                        "attaching under document root",
                        doc.source_path, depth, title,
                    )
                    path_stack = [doc.source_path]
                else:
                    logger.warning(
                        "%s: heading %r skips from level %d to %d",
                        doc.source_path, title, len(path_stack), depth,
                    )
            path_stack = path_stack[: depth - 1] + [title]
            current_path = list(path_stack)
        else:
            current_lines.append(line)
    flush()

    chunks: list[Chunk] = []
    seen_ids: dict[str, int] = {}
    for heading_path, lines in sections:
        text = "\n".join(lines).strip()
        base_id = doc.source_path + "#" + "/".join(slugify(p) for p in heading_path)
        n = seen_ids.get(base_id, 0)
        seen_ids[base_id] = n + 1
        chunk_id = base_id if n == 0 else f"{base_id}-{n + 1}"
        chunks.append(Chunk(id=chunk_id, source_path=doc.source_path,
                            heading_path=heading_path, text=text))
    return chunks


def ingest_directory(docs_dir: str | Path, max_depth: int = DEFAULT_MAX_DEPTH) -> list[Chunk]:
    """Segment every .md file under docs_dir (recursive, sorted for determinism)."""
    docs_dir = Path(docs_dir)
    chunks: list[Chunk] = []
    for path in sorted(docs_dir.rglob("*.md")):
        rel = path.relative_to(docs_dir).as_posix()
        try:
            raw = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ChunkStoreError(f"cannot read {path}: {exc}") from exc
        chunks.extend(segment_markdown(Document(source_path=rel, raw=raw), max_depth))
    return chunks


def save_chunks(chunks: list[Chunk], path: str | Path) -> None:
    """Write chunks as JSON lines, atomically (temp file + rename)."""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for chunk in chunks:
                record = {
                    "id": chunk.id,
                    "source_path": chunk.source_path,
                    "heading_path": chunk.heading_path,
                    "text": chunk.text,
                    "token_count": chunk.token_count,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        os.replace(tmp_name, path)
    except OSError as exc:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise ChunkStoreError(f"cannot write chunk store {path}: {exc}") from exc


_REQUIRED_FIELDS = ("id", "source_path", "heading_path", "text", "token_count")


def load_chunks(path: str | Path) -> list[Chunk]:
    """Load a JSON-lines chunk store; malformed records fail with their line number."""
    chunks: list[Chunk] = []
    seen: set[str] = set()
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ChunkParseError(str(exc), lineno) from exc
                missing = [f for f in _REQUIRED_FIELDS if f not in record]
                if missing:
                    raise ChunkParseError(f"missing fields {missing}", lineno)
                if record["id"] in seen:
                    raise ChunkParseError(f"duplicate chunk id {record['id']!r}", lineno)
                seen.add(record["id"])
                chunks.append(Chunk(
                    id=record["id"],
                    source_path=record["source_path"],
                    heading_path=list(record["heading_path"]),
                    text=record["text"],
                    token_count=int(record["token_count"]),
                ))
    except OSError as exc:
        raise ChunkStoreError(f"cannot read chunk store {path}: {exc}") from exc
    return chunks
