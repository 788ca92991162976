"""Run the full offline evaluation battery (first-stage retrieval,
reranking, end to end) over the demo workspace and emit JSON plus
markdown reports; builds the workspace first when it is missing.

Usage:
    python3 scripts/run_offline_eval.py --workdir demo_workspace
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from make_demo_corpus import build_workspace  # noqa: E402

from docrag.bench import (emit_report, eval_end_to_end, eval_rerank,  # noqa: E402
                          eval_retrieval, load_dataset, render_markdown)
from docrag.config import PipelineConfig  # noqa: E402
from docrag.pipeline import Pipeline  # noqa: E402
from docrag.retrieval import Retriever  # noqa: E402

logger = logging.getLogger("run_offline_eval")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="demo_workspace",
                        help="demo workspace (created when missing)")
    parser.add_argument("--reports", default=None,
                        help="report directory (default <workdir>/reports)")
    parser.add_argument("--no-timings", action="store_true",
                        help="zero timing fields for reproducible bytes")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    workdir = Path(args.workdir)
    config_path = workdir / "config.json"
    if not config_path.exists():
        logger.info("no workspace at %s; building one", workdir)
        build_workspace(workdir, seed=args.seed)

    config = PipelineConfig.load(config_path)
    pipeline = Pipeline.from_config(config)
    dataset = load_dataset(workdir / "dataset.json",
                           known_chunk_ids=set(pipeline.chunks_by_id))
    reports_dir = Path(args.reports) if args.reports else workdir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)

    retriever = Retriever(pipeline.index, pipeline.store, pipeline.embedder,
                          lexical_k=config.lexical_k,
                          semantic_k=config.semantic_k,
                          rrf_k=config.rrf_const)
    texts = {cid: c.text for cid, c in pipeline.chunks_by_id.items()}

    runs = (
        ("retrieval", eval_retrieval(dataset, retriever,
                                     config_snapshot=config.to_dict(),
                                     config_hash=config.config_hash())),
        ("rerank", eval_rerank(dataset, retriever,
                               pipeline._backend_for(config.rerank.backend),
                               texts, config_snapshot=config.to_dict(),
                               config_hash=config.config_hash())),
        ("e2e", eval_end_to_end(dataset, pipeline,
                                measure_timings=not args.no_timings)),
    )

    for name, report in runs:
        for fmt, suffix in (("json", "json"), ("markdown", "md")):
            path = reports_dir / f"{name}.{suffix}"
            emit_report(report, fmt, path)
            logger.info("wrote %s", path)

    print()
    for name, report in runs:
        print(render_markdown(report))
        print()
    e2e = runs[-1][1]
    print(f"evaluated {e2e.total_count} records "
          f"({e2e.failed_count} failed); reports in {reports_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
