"""Command-line entry point: ingest, index, query, bench, datagen, loss,
serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (emit_report, eval_end_to_end, eval_rerank, eval_retrieval,
                    import_ordqa, load_dataset)
from .config import PipelineConfig
from .corpus import ingest_directory, load_chunks, save_chunks
from .datagen import (FixtureRelevanceLabeler, LlmRelevanceLabeler,
                      build_contrastive_dataset, build_instruction_dataset,
                      build_reranker_dataset, load_term_list, save_records_jsonl)
from .losses import (EmbeddingBatch, RerankBatch, TokenSequenceLikelihood,
                     autoregressive_nll, embedding_contrastive_gradients,
                     embedding_contrastive_loss, reranker_contrastive_gradients,
                     reranker_contrastive_loss)
from .pipeline import Pipeline, build_artifacts, load_canned_answers
from .retrieval import Retriever

logger = logging.getLogger(__name__)


def _load_config(path: str) -> PipelineConfig:
    return PipelineConfig.load(path)


def _report_format(out: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    suffix = Path(out).suffix.lower()
    return {".json": "json", ".md": "markdown", ".markdown": "markdown",
            ".csv": "csv"}.get(suffix, "json")


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides = {}
    for key in ("lexical_k", "semantic_k", "rerank_k", "rrf_const",
                "token_budget", "rerank_backend"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


def cmd_ingest(args: argparse.Namespace) -> int:
    chunks = ingest_directory(args.docs, max_depth=args.max_depth)
    save_chunks(chunks, args.out)
    print(f"wrote {len(chunks)} chunks to {args.out}")
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    chunks_path = args.chunks or config.paths.chunk_store
    chunks = load_chunks(chunks_path)
    build_artifacts(config, chunks)
    print(f"indexed {len(chunks)} chunks: lexical -> "
          f"{config.paths.lexical_index}, vectors -> "
          f"{config.paths.vector_store}")
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    pipeline = Pipeline.from_config(config)
    response = pipeline.run_query(args.question,
                                  overrides=_overrides_from_args(args))
    if args.json:
        print(json.dumps(response.to_dict(), indent=2, sort_keys=True))
        return 0
    print(f"answer: {response.answer}\n")
    for cand in response.candidates:
        print(f"  {cand.rank}. {cand.chunk_id} "
              f"(rerank={cand.rerank_score:.4f}, rrf={cand.rrf_score:.4f})")
    for warning in response.warnings:
        print(f"warning: {warning}")
    if response.error:
        print(f"error [{response.error['stage']}]: {response.error['message']}")
        return 1
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    pipeline = Pipeline.from_config(config)
    chunk_ids = set(pipeline.chunks_by_id)
    if args.import_ordqa:
        dataset = import_ordqa(args.dataset)
    else:
        dataset = load_dataset(args.dataset, known_chunk_ids=chunk_ids
                               if args.check_refs else None)
    if args.kind == "retrieval":
        retriever = Retriever(pipeline.index, pipeline.store,
                              pipeline.embedder, lexical_k=config.lexical_k,
                              semantic_k=config.semantic_k,
                              rrf_k=config.rrf_const)
        report = eval_retrieval(dataset, retriever,
                                config_snapshot=config.to_dict(),
                                config_hash=config.config_hash())
    elif args.kind == "rerank":
        retriever = Retriever(pipeline.index, pipeline.store,
                              pipeline.embedder, lexical_k=config.lexical_k,
                              semantic_k=config.semantic_k,
                              rrf_k=config.rrf_const)
        texts = {cid: c.text for cid, c in pipeline.chunks_by_id.items()}
        report = eval_rerank(dataset, retriever,
                             pipeline._backend_for(config.rerank.backend),
                             texts, config_snapshot=config.to_dict(),
                             config_hash=config.config_hash())
    else:
        report = eval_end_to_end(dataset, pipeline,
                                 measure_timings=not args.no_timings)
    fmt = _report_format(args.out, args.format)
    emit_report(report, fmt, args.out)
    print(f"wrote {report.kind} report ({fmt}) for {report.total_count} "
          f"records to {args.out}")
    return 0


def _datagen_client(args: argparse.Namespace, config: PipelineConfig | None):
    if args.fixture:
        return load_canned_answers(Path(args.fixture) / "answers.json")
    if config is None:
        raise SystemExit("datagen needs --fixture or --config with a "
                         "remote generator")
    from .generation import RemoteChatClient
    gen = config.generator
    return RemoteChatClient(gen.endpoint, gen.model,
                            temperature=gen.temperature,
                            timeout=config.limits.timeout_s,
                            retries=config.limits.retries)


def cmd_datagen(args: argparse.Namespace) -> int:
    config = _load_config(args.config) if args.config else None
    if args.kind == "triplets":
        pairs = [(row["query"], row["terminology"])
                 for row in json.loads(Path(args.queries).read_text("utf-8"))]
        terms = load_term_list(args.terms)
        build = build_contrastive_dataset(pairs, terms,
                                          _datagen_client(args, config),
                                          seed=args.seed,
                                          positive_mode=args.positive_mode)
        save_records_jsonl(build.triplets, args.out, build.prompt_version)
        print(f"wrote {len(build.triplets)} triplets to {args.out} "
              f"({len(build.skipped)} skipped)")
    elif args.kind == "reranker":
        if config is None:
            raise SystemExit("datagen reranker needs --config for the indexes")
        pipeline = Pipeline.from_config(config)
        retriever = Retriever(pipeline.index, pipeline.store,
                              pipeline.embedder, rrf_k=config.rrf_const)
        questions = [(r.id, r.question) for r in load_dataset(args.dataset)]
        if args.fixture:
            labels = json.loads((Path(args.fixture) / "labels.json")
                                .read_text("utf-8"))
            labeler = FixtureRelevanceLabeler(
                {qid: set(ids) for qid, ids in labels.items()})
        else:
            labeler = LlmRelevanceLabeler(_datagen_client(args, config))
        texts = {cid: c.text for cid, c in pipeline.chunks_by_id.items()}
        build = build_reranker_dataset(questions, retriever, labeler, texts)
        save_records_jsonl(build.examples, args.out, build.prompt_version)
        print(f"wrote {len(build.examples)} examples to {args.out} "
              f"({len(build.skipped)} skipped)")
    else:
        if config is None and not args.chunks:
            raise SystemExit("datagen instruct needs --chunks or --config")
        chunks_path = args.chunks or config.paths.chunk_store
        chunks = load_chunks(chunks_path)
        build = build_instruction_dataset(chunks,
                                          _datagen_client(args, config),
                                          count=args.count,
                                          pool_size=args.pool_size,
                                          seed=args.seed)
        save_records_jsonl(build.triplets, args.out, build.prompt_version)
        print(f"wrote {len(build.triplets)} triplets to {args.out} "
              f"({len(build.dropped)} dropped)")
    return 0


def cmd_loss(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.input).read_text("utf-8"))
    if args.kind == "embedding":
        batch = EmbeddingBatch.from_dict(payload)
        result = embedding_contrastive_loss(batch)
        grad_pos, grad_neg = embedding_contrastive_gradients(batch)
        output = {"kind": "embedding", "mean_loss": result.mean,
                  "per_example": result.per_example,
                  "grad_sims_pos": np.asarray(grad_pos).tolist(),
                  "grad_sims_neg": np.asarray(grad_neg).tolist()}
    elif args.kind == "reranker":
        batch = RerankBatch.from_dict(payload)
        grad_pos, grad_negs = reranker_contrastive_gradients(batch)
        output = {"kind": "reranker",
                  "loss": reranker_contrastive_loss(batch),
                  "grad_pos_score": grad_pos, "grad_neg_scores": grad_negs}
    else:
        seq = TokenSequenceLikelihood.from_dict(payload)
        output = {"kind": "nll", "loss": autoregressive_nll(seq)}
    print(json.dumps(output, indent=2, sort_keys=True))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve
    serve(_load_config(args.config), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docrag",
        description="Hybrid retrieval + generation over tool documentation")
    parser.add_argument("--verbose", action="store_true",
                        help="enable info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="segment markdown docs into chunks")
    p.add_argument("--docs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-depth", type=int, default=2)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("index", help="build lexical index and vector store")
    p.add_argument("--config", required=True)
    p.add_argument("--chunks", default=None)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("query", help="answer one question")
    p.add_argument("question")
    p.add_argument("--config", required=True)
    p.add_argument("--json", action="store_true")
    for key in ("lexical-k", "semantic-k", "rerank-k", "rrf-const",
                "token-budget"):
        p.add_argument(f"--{key}", type=int, default=None,
                       dest=key.replace("-", "_"))
    p.add_argument("--rerank-backend", default=None, dest="rerank_backend",
                   choices=("rrf", "embedding", "remote"))
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("bench", help="run an evaluation")
    p.add_argument("kind", choices=("retrieval", "rerank", "e2e"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "csv", "markdown"),
                   default=None)
    p.add_argument("--import-ordqa", action="store_true",
                   help="treat --dataset as the published upstream layout")
    p.add_argument("--check-refs", action="store_true",
                   help="fail loading when reference ids are unresolvable")
    p.add_argument("--no-timings", action="store_true",
                   help="zero timing fields for byte-reproducible reports")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("datagen", help="build training datasets")
    p.add_argument("kind", choices=("triplets", "reranker", "instruct"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixture", default=None,
                   help="directory with canned client transcripts")
    p.add_argument("--config", default=None)
    p.add_argument("--queries", default=None,
                   help="triplets: JSON array of {query, terminology}")
    p.add_argument("--terms", default=None,
                   help="triplets: terminology file (default packaged list)")
    p.add_argument("--positive-mode", choices=("answer", "paraphrase"),
                   default="answer")
    p.add_argument("--dataset", default=None,
                   help="reranker: QA dataset with question ids")
    p.add_argument("--chunks", default=None, help="instruct: chunk store path")
    p.add_argument("--count", type=int, default=10,
                   help="instruct: triplets to generate")
    p.add_argument("--pool-size", type=int, default=10)
    p.set_defaults(fn=cmd_datagen)

    p = sub.add_parser("loss", help="evaluate a loss batch")
    loss_sub = p.add_subparsers(dest="loss_command", required=True)
    pe = loss_sub.add_parser("eval")
    pe.add_argument("--kind", required=True,
                    choices=("embedding", "reranker", "nll"))
    pe.add_argument("--input", required=True)
    pe.set_defaults(fn=cmd_loss)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
