"""Build a self-contained offline demo workspace: a small markdown
documentation tree, persisted chunk/index/vector artifacts, a QA dataset
whose references point at real chunk ids, and a canned-generator config,
so `docrag query` and `docrag bench` run without any network access.

Usage:
    python3 scripts/make_demo_corpus.py --out demo_workspace
"""

from __future__ import annotations

import argparse
import json
import logging
import random
from pathlib import Path

from docrag.config import PipelineConfig
from docrag.corpus import ingest_directory, save_chunks
from docrag.pipeline import build_artifacts

logger = logging.getLogger("make_demo_corpus")

TOPICS = ("placement", "routing", "timing", "power", "synthesis",
          "floorplan", "drc", "lvs", "partition", "clock")

SECTION_BODY = (
    "The {command} command controls the {topic} step of the flow. "
    "Run {command} after loading the design to refresh the {topic} "
    "state, then inspect the log for warnings. Typical usage:\n\n"
    "    {command} -verbose 1\n\n"
    "Results are written to the current session database.")

GUIDE_PREAMBLE = (
    "This guide covers the {label} stages of the flow. Each section "
    "documents one command with its arguments and expected outputs.")


def write_guides(docs_dir: Path, guides: int, sections: int,
                 seed: int) -> list[tuple[str, str]]:
    """Write markdown guides; returns (command, topic) per section in
    document order."""
    rng = random.Random(seed)
    docs_dir.mkdir(parents=True, exist_ok=True)
    written: list[tuple[str, str]] = []
    counter = 0
    for g in range(guides):
        lines = [f"# Guide {g}", "",
                 GUIDE_PREAMBLE.format(label=f"group {g}"), ""]
        for _ in range(sections):
            topic = TOPICS[counter % len(TOPICS)]
            command = f"cmd_{topic}_{counter:03d}"
            counter += 1
            lines += [f"## Using {command}", "",
                      SECTION_BODY.format(command=command, topic=topic), ""]
            written.append((command, topic))
        # one deeper heading per guide to exercise depth capping
        deep_cmd = rng.choice([c for c, _ in written])
        lines += ["### Notes", "",
                  f"See also {deep_cmd} for a related workflow.", ""]
        (docs_dir / f"guide_{g}.md").write_text("\n".join(lines),
                                                encoding="utf-8")
    return written


def build_workspace(out: Path, guides: int = 3, sections: int = 8,
                    seed: int = 0) -> dict:
    """Create docs, artifacts, dataset, canned answers, and config under
    `out`; returns the paths written."""
    docs_dir = out / "docs"
    commands = write_guides(docs_dir, guides, sections, seed)
    chunks = ingest_directory(docs_dir)
    chunk_store = out / "artifacts" / "chunks.jsonl"
    chunk_store.parent.mkdir(parents=True, exist_ok=True)
    save_chunks(chunks, chunk_store)

    config = PipelineConfig.from_dict({
        **PipelineConfig().to_dict(),
        "paths": {"chunk_store": str(chunk_store),
                  "lexical_index": str(out / "artifacts" / "lexical.json"),
                  "vector_store": str(out / "artifacts" / "vectors.npz")},
        "generator": {"provider": "canned",
                      "canned_answers_path": str(out / "answers.json"),
                      "canned_key": "question"}})
    build_artifacts(config, chunks)

    by_command = {}
    for chunk in chunks:
        for command, topic in commands:
            if f"## Using {command}" in chunk.text:
                by_command[command] = (chunk, topic)

    records = []
    answers = {}
    for i, (command, (chunk, topic)) in enumerate(sorted(by_command.items())):
        question = f"How do I run {command} during the {topic} step?"
        answer = (f"Run {command} after loading the design to refresh the "
                  f"{topic} state.")
        answers[question] = answer
        records.append({"id": f"demo-{i:03d}", "question": question,
                        "category": ("functionality", "vlsi-flow", "gui",
                                     "installation-test")[i % 4],
                        "reference_chunk_ids": [chunk.id],
                        "answer": answer})

    (out / "answers.json").write_text(json.dumps(answers, indent=2,
                                                 sort_keys=True) + "\n")
    dataset_path = out / "dataset.json"
    dataset_path.write_text(json.dumps(records, indent=2) + "\n")
    config_path = out / "config.json"
    config.save(config_path)

    logger.info("workspace at %s: %d chunks, %d QA records", out,
                len(chunks), len(records))
    return {"config": config_path, "dataset": dataset_path,
            "docs": docs_dir, "chunks": len(chunks), "records": len(records)}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="workspace directory")
    parser.add_argument("--guides", type=int, default=3)
    parser.add_argument("--sections", type=int, default=8,
                        help="sections per guide")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    out = Path(args.out)
    result = build_workspace(out, guides=args.guides,
                             sections=args.sections, seed=args.seed)
    print(f"wrote {result['chunks']} chunks and {result['records']} QA "
          f"records under {out}")
    print(f"try: python3 -m docrag.cli query 'How do I run "
          f"cmd_placement_000 during the placement step?' "
          f"--config {result['config']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
