"""Shared fixtures: a keyword-tagged corpus where every question has one
unambiguous reference chunk, plus a fully offline pipeline over it."""

from __future__ import annotations

import pytest

from docrag.bench import QaRecord
from docrag.config import PipelineConfig
from docrag.corpus import Chunk
from docrag.generation import CannedChatClient
from docrag.lexical import build_index
from docrag.pipeline import Pipeline, extract_question
from docrag.retrieval import EmbeddingCosineReranker
from docrag.vectors import HashEmbedder, build_vector_store

TOPICS = ("placement", "routing", "timing", "power", "synthesis",
          "floorplan", "drc", "lvs", "partition", "clock")
CATEGORY_CYCLE = ("functionality", "vlsi-flow", "gui", "installation-test")


def make_keyword_corpus(n: int = 50) -> tuple[list[Chunk], list[QaRecord]]:
    """n chunks, each holding one globally unique command token; question i
    names chunk i's token so stage-one retrieval has a known answer."""
    chunks = []
    records = []
    for i in range(n):
        topic = TOPICS[i % len(TOPICS)]
        command = f"cmd_{topic}_{i:02d}"
        text = (f"## Using {command}\n\nThe {command} command controls the "
                f"{topic} step number {i}. Run {command} after loading the "
                f"design to update the {topic} state.")
        chunk = Chunk(id=f"guide-{i // 10}.md#using-{command}",
                      source_path=f"guide-{i // 10}.md",
                      heading_path=[f"Guide {i // 10}", f"Using {command}"],
                      text=text)
        chunks.append(chunk)
        records.append(QaRecord(
            id=f"q{i:03d}",
            question=f"How do I run {command} for the {topic} step?",
            category=CATEGORY_CYCLE[i % len(CATEGORY_CYCLE)],
            reference_chunk_ids=[chunk.id],
            answer=f"Run {command} after loading the design to update the "
                   f"{topic} state."))
    return chunks, records


def echo_client(records: list[QaRecord]) -> CannedChatClient:
    """Canned generator returning each question's ground-truth answer,
    keyed on the question line inside the prompt."""
    return CannedChatClient(
        answers={r.question: r.answer for r in records},
        key_fn=extract_question)


def make_offline_pipeline(chunks: list[Chunk], records: list[QaRecord],
                          config: PipelineConfig | None = None,
                          chat_client=None, judge_client=None) -> Pipeline:
    config = config or PipelineConfig()
    embedder = HashEmbedder(dim=config.embedding.dim)
    return Pipeline(
        config=config, chunks=chunks,
        index=build_index(chunks),
        store=build_vector_store(chunks, embedder),
        embedder=embedder,
        chat_client=chat_client or echo_client(records),
        rerank_backend=EmbeddingCosineReranker(embedder)
        if config.rerank.backend == "embedding" else None,
        judge_client=judge_client)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per release criterion from the acceptance module."""
    outcomes: dict[str, str] = {}
    for stat_key, label in (("passed", "PASS"), ("failed", "FAIL"),
                            ("error", "FAIL")):
        for report in terminalreporter.stats.get(stat_key, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if stat_key == "passed" and getattr(report, "when", "call") != "call":
                continue
            name = nodeid.split("::")[-1]
            if outcomes.get(name) != "FAIL":
                outcomes[name] = label
    if outcomes:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name in sorted(outcomes):
            pretty = name.removeprefix("test_").replace("_", " ")
            terminalreporter.write_line(f"  {outcomes[name]}  {pretty}")


@pytest.fixture
def keyword_corpus():
    return make_keyword_corpus(50)


@pytest.fixture
def offline_pipeline(keyword_corpus):
    chunks, records = keyword_corpus
    return make_offline_pipeline(chunks, records)
