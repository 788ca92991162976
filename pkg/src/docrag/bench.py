"""Benchmark harness: QA dataset loading (with an import adapter for the
published ORD-QA layout), stage-wise and end-to-end evaluation, category
aggregation, and report emission as json, csv or markdown."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import bleu, recall_at_k, rouge_l
from .remote import TransportError
from .retrieval import RerankBackend, Retriever, rerank

logger = logging.getLogger(__name__)

CATEGORIES = ("functionality", "vlsi-flow", "gui", "installation-test")

# gui and installation-test are small; they report as one merged group.
MERGED_GROUP = "gui+installation-test"
REPORT_GROUP = {"functionality": "functionality", "vlsi-flow": "vlsi-flow",
                "gui": MERGED_GROUP, "installation-test": MERGED_GROUP}
REPORT_GROUPS = ("functionality", "vlsi-flow", MERGED_GROUP)

DEFAULT_RETRIEVAL_K = (5, 10, 15, 20)
DEFAULT_RERANK_K = (1, 2, 3, 4, 5)
RETRIEVAL_MODES = ("lexical", "semantic", "hybrid")

_CATEGORY_ALIASES = {
    "functionality": "functionality",
    "vlsi flow": "vlsi-flow", "vlsi-flow": "vlsi-flow",
    "gui": "gui",
    "installation & test": "installation-test",
    "installation and test": "installation-test",
    "installation-test": "installation-test",
    "install & test": "installation-test",
}


class DatasetLoadError(Exception):
    pass


@dataclass
class QaRecord:
    id: str
    question: str
    category: str
    reference_chunk_ids: list[str]
    answer: str


@dataclass
class RecordResult:
    record_id: str
    category: str
    group: str
    metrics: dict[str, float] = field(default_factory=dict)
    timings_ms: dict[str, float] = field(default_factory=dict)
    failed: bool = False
    error: str | None = None
    judge_available: bool | None = None
    answer: str | None = None


@dataclass
class EvalReport:
    kind: str
    records: list[RecordResult]
    category_aggregates: dict[str, dict[str, float]]
    category_metric_counts: dict[str, dict[str, int]]
    category_counts: dict[str, int]
    overall: dict[str, float]
    recall_table: dict[str, dict[str, float]] = field(default_factory=dict)
    timing_stats: dict[str, dict[str, float]] = field(default_factory=dict)
    config_snapshot: dict = field(default_factory=dict)
    config_hash: str = ""
    judge_coverage: float | None = None
    failed_count: int = 0
    total_count: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        data = dict(payload)
        data["records"] = [RecordResult(**r) for r in payload["records"]]
        return cls(**data)

    def metric_names(self) -> list[str]:
        names: set[str] = set()
        for record in self.records:
            names.update(record.metrics)
        return sorted(names)

    def overall_from_categories(self, metric: str) -> float:
        """Recompute the overall mean as the count-weighted mean of the
        per-group means (the aggregate consistency invariant)."""
        total = 0.0
        weight = 0
        for group, aggregates in self.category_aggregates.items():
            if metric in aggregates:
                count = self.category_metric_counts[group][metric]
                total += aggregates[metric] * count
                weight += count
        if weight == 0:
            raise ValueError(f"metric {metric!r} absent from every group")
        return total / weight


def _normalize_category(raw: str) -> str | None:
    return _CATEGORY_ALIASES.get(raw.strip().lower())


def load_dataset(path: str | Path,
                 known_chunk_ids: set[str] | None = None) -> list[QaRecord]:
    """Load and validate the internal QA dataset format: a JSON array of
    {"id","question","category","reference_chunk_ids","answer"}.

    All invalid records are collected into one load error; when
    `known_chunk_ids` is given, unresolvable reference ids are reported
    with their record ids. An empty file yields an empty dataset with a
    warning.
    """
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        logger.warning("dataset %s is empty", path)
        return []
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetLoadError(f"dataset {path} is not valid JSON: {exc}")
    if not isinstance(payload, list):
        raise DatasetLoadError(f"dataset {path} must be a JSON array")
    if not payload:
        logger.warning("dataset %s has no records", path)
        return []
    records: list[QaRecord] = []
    problems: list[str] = []
    seen_ids: set[str] = set()
    for i, raw in enumerate(payload):
        label = raw.get("id", f"index {i}") if isinstance(raw, dict) else f"index {i}"
        if not isinstance(raw, dict):
            problems.append(f"{label}: record is not an object")
            continue
        missing = [k for k in ("id", "question", "category",
                               "reference_chunk_ids", "answer") if k not in raw]
        if missing:
            problems.append(f"{label}: missing fields {missing}")
            continue
        category = raw["category"]
        if category not in CATEGORIES:
            problems.append(f"{label}: unknown category {category!r}")
            continue
        refs = raw["reference_chunk_ids"]
        if not isinstance(refs, list) or not refs \
                or not all(isinstance(r, str) for r in refs):
            problems.append(f"{label}: reference_chunk_ids must be a "
                            "non-empty list of ids")
            continue
        if raw["id"] in seen_ids:
            problems.append(f"{label}: duplicate record id")
            continue
        if known_chunk_ids is not None:
            unresolved = sorted(set(refs) - known_chunk_ids)
            if unresolved:
                problems.append(f"{label}: unresolvable chunk ids {unresolved}")
                continue
        seen_ids.add(raw["id"])
        records.append(QaRecord(id=str(raw["id"]), question=str(raw["question"]),
                                category=category,
                                reference_chunk_ids=[str(r) for r in refs],
                                answer=str(raw["answer"])))
    if problems:
        raise DatasetLoadError(
            f"dataset {path} has {len(problems)} invalid record(s): "
            + "; ".join(problems))
    return records


def import_ordqa(path: str | Path) -> list[QaRecord]:
    """Adapter from the published question/reference/answer layout to the
    internal schema: tolerant field names, category names normalized to
    the closed set, ids assigned sequentially when absent."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise DatasetLoadError(f"{path}: expected a JSON array of records")
    records: list[QaRecord] = []
    problems: list[str] = []
    for i, raw in enumerate(payload):
        if not isinstance(raw, dict):
            problems.append(f"index {i}: record is not an object")
            continue
        record_id = str(raw.get("id") or f"ordqa-{i + 1:03d}")
        question = raw.get("question")
        answer = raw.get("answer", raw.get("ground_truth"))
        refs = raw.get("reference_chunk_ids",
                       raw.get("references", raw.get("reference_documents")))
        category = _normalize_category(str(raw.get("category", "")))
        if not question or not isinstance(question, str):
            problems.append(f"{record_id}: missing question")
            continue
        if not answer or not isinstance(answer, str):
            problems.append(f"{record_id}: missing answer")
            continue
        if not isinstance(refs, list) or not refs:
            problems.append(f"{record_id}: missing references")
            continue
        if category is None:
            problems.append(f"{record_id}: unmappable category "
                            f"{raw.get('category')!r}")
            continue
        records.append(QaRecord(id=record_id, question=question,
                                category=category,
                                reference_chunk_ids=[str(r) for r in refs],
                                answer=answer))
    if problems:
        raise DatasetLoadError(f"{path} import failed for {len(problems)} "
                               "record(s): " + "; ".join(problems))
    return records


def _aggregate(records: list[RecordResult]) -> tuple[dict, dict, dict, dict]:
    """Per-group means, per-group metric counts, per-group record counts
    (failed included), and overall means; reduction runs in record-id
    order so aggregation is deterministic."""
    ordered = sorted(records, key=lambda r: r.record_id)
    sums: dict[str, dict[str, list[float]]] = {}
    category_counts: dict[str, int] = {}
    for record in ordered:
        category_counts[record.group] = category_counts.get(record.group, 0) + 1
        if record.failed:
            continue
        group_sums = sums.setdefault(record.group, {})
        for metric, value in record.metrics.items():
            group_sums.setdefault(metric, []).append(value)
    aggregates = {group: {m: math.fsum(vs) / len(vs)
                          for m, vs in sorted(group_sums.items())}
                  for group, group_sums in sorted(sums.items())}
    metric_counts = {group: {m: len(vs) for m, vs in sorted(group_sums.items())}
                     for group, group_sums in sorted(sums.items())}
    overall_values: dict[str, list[float]] = {}
    for record in ordered:
        if record.failed:
            continue
        for metric, value in record.metrics.items():
            overall_values.setdefault(metric, []).append(value)
    overall = {m: math.fsum(vs) / len(vs)
               for m, vs in sorted(overall_values.items())}
    return aggregates, metric_counts, category_counts, overall


def _timing_stats(records: list[RecordResult]) -> dict[str, dict[str, float]]:
    per_stage: dict[str, list[float]] = {}
    for record in records:
        if record.failed:
            continue
        for stage, ms in record.timings_ms.items():
            per_stage.setdefault(stage, []).append(ms)
    return {stage: {"mean_ms": math.fsum(vs) / len(vs),
                    "median_ms": statistics.median(vs)}
            for stage, vs in sorted(per_stage.items())}


def _build_report(kind: str, records: list[RecordResult], *,
                  recall_table: dict | None = None,
                  config_snapshot: dict | None = None,
                  config_hash: str = "",
                  judge_coverage: float | None = None) -> EvalReport:
    aggregates, metric_counts, category_counts, overall = _aggregate(records)
    return EvalReport(
        kind=kind, records=sorted(records, key=lambda r: r.record_id),
        category_aggregates=aggregates,
        category_metric_counts=metric_counts,
        category_counts=category_counts, overall=overall,
        recall_table=recall_table or {},
        timing_stats=_timing_stats(records),
        config_snapshot=config_snapshot or {}, config_hash=config_hash,
        judge_coverage=judge_coverage,
        failed_count=sum(1 for r in records if r.failed),
        total_count=len(records))


def eval_retrieval(dataset: list[QaRecord], retriever: Retriever,
                   k_values: tuple[int, ...] = DEFAULT_RETRIEVAL_K,
                   modes: tuple[str, ...] = RETRIEVAL_MODES,
                   config_snapshot: dict | None = None,
                   config_hash: str = "") -> EvalReport:
    """Mean recall@k per retrieval mode; searcher depth is raised to
    max(k_values) so every requested cutoff is measurable."""
    max_k = max(k_values)
    saved = retriever.lexical_k, retriever.semantic_k
    retriever.lexical_k = retriever.semantic_k = max_k
    try:
        results = []
        for record in sorted(dataset, key=lambda r: r.id):
            metrics = {}
            for mode in modes:
                ids = [c.chunk_id for c in retriever.retrieve(record.question, mode)]
                for k in k_values:
                    metrics[f"{mode}/recall@{k}"] = recall_at_k(
                        set(record.reference_chunk_ids), ids, k)
            results.append(RecordResult(
                record_id=record.id, category=record.category,
                group=REPORT_GROUP[record.category], metrics=metrics))
    finally:
        retriever.lexical_k, retriever.semantic_k = saved
    report = _build_report("retrieval", results,
                           config_snapshot=config_snapshot,
                           config_hash=config_hash)
    report.recall_table = {
        mode: {str(k): report.overall[f"{mode}/recall@{k}"] for k in k_values}
        for mode in modes if results}
    return report


def eval_rerank(dataset: list[QaRecord], retriever: Retriever,
                backend: RerankBackend, chunk_texts: dict[str, str],
                k_values: tuple[int, ...] = DEFAULT_RERANK_K,
                config_snapshot: dict | None = None,
                config_hash: str = "") -> EvalReport:
    """Mean recall@k over the reranked candidate order (hybrid first stage
    at the retriever's configured depths)."""
    max_k = max(k_values)
    results = []
    for record in sorted(dataset, key=lambda r: r.id):
        candidates = retriever.retrieve(record.question, "hybrid")
        texts = [chunk_texts[c.chunk_id] for c in candidates]
        reranked = rerank(record.question, candidates, texts, backend,
                          top_k=max_k)
        ids = [h.chunk_id for h in reranked.hits]
        metrics = {f"recall@{k}": recall_at_k(set(record.reference_chunk_ids),
                                              ids, k)
                   for k in k_values}
        results.append(RecordResult(
            record_id=record.id, category=record.category,
            group=REPORT_GROUP[record.category], metrics=metrics))
    report = _build_report("rerank", results, config_snapshot=config_snapshot,
                           config_hash=config_hash)
    if results:
        report.recall_table = {backend.name: {
            str(k): report.overall[f"recall@{k}"] for k in k_values}}
    return report


def eval_end_to_end(dataset: list[QaRecord], pipeline,
                    measure_timings: bool = True,
                    warmup: bool = True) -> EvalReport:
    """Generate an answer per record and score it against the ground truth
    with BLEU and ROUGE-L, plus the configured judge when one is available.

    Failed generations are excluded from means but counted; judge
    transport failures leave the record usable with the judge metric
    marked unavailable. The first query can be replayed once as warmup so
    timing stats exclude cold caches.
    """
    ordered = sorted(dataset, key=lambda r: r.id)
    if warmup and measure_timings and ordered:
        pipeline.run_query(ordered[0].question, measure_timings=False)
    results = []
    judged = 0
    succeeded = 0
    has_judge = getattr(pipeline, "judge_client", None) is not None
    for record in ordered:
        response = pipeline.run_query(record.question,
                                      measure_timings=measure_timings)
        result = RecordResult(
            record_id=record.id, category=record.category,
            group=REPORT_GROUP[record.category],
            timings_ms=dict(response.timings_ms))
        if response.error is not None:
            result.failed = True
            result.error = response.error.get("message", "generation failed")
            logger.warning("record %s failed: %s", record.id, result.error)
        else:
            succeeded += 1
            result.answer = response.answer
            result.metrics["bleu"] = bleu(response.answer, record.answer).value
            result.metrics["rouge_l"] = rouge_l(response.answer,
                                                record.answer).value
            if has_judge:
                try:
                    score = pipeline.judge_answer(record.question,
                                                  response.answer, record.answer)
                    result.metrics["judge"] = score
                    result.judge_available = True
                    judged += 1
                except TransportError as exc:
                    logger.warning("judge unavailable for %s: %s", record.id, exc)
                    result.judge_available = False
        results.append(result)
    coverage = None
    if has_judge:
        coverage = (judged / succeeded) if succeeded else 0.0
    return _build_report("e2e", results,
                         config_snapshot=pipeline.config_snapshot(),
                         config_hash=pipeline.config_hash(),
                         judge_coverage=coverage)


def _format_cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.6f}"


def render_markdown(report: EvalReport) -> str:
    """Metric table with one column per reporting group plus "all"."""
    lines = [f"# Evaluation report ({report.kind})", ""]
    lines.append(f"- records: {report.total_count} "
                 f"(failed: {report.failed_count})")
    lines.append(f"- config hash: `{report.config_hash or 'n/a'}`")
    if report.judge_coverage is not None:
        lines.append(f"- judge coverage: {report.judge_coverage:.3f}")
    lines.append("")
    groups = [g for g in REPORT_GROUPS if g in report.category_counts]
    header = "| metric | " + " | ".join(groups) + " | all |"
    rule = "|---" * (len(groups) + 2) + "|"
    lines.extend([header, rule])
    for metric in report.metric_names():
        cells = [_format_cell(report.category_aggregates.get(g, {}).get(metric))
                 for g in groups]
        cells.append(_format_cell(report.overall.get(metric)))
        lines.append(f"| {metric} | " + " | ".join(cells) + " |")
    if report.recall_table:
        lines.extend(["", "## Recall table", ""])
        for mode, row in sorted(report.recall_table.items()):
            ks = sorted(row, key=int)
            lines.append(f"| {mode} | " + " | ".join(
                f"recall@{k}={row[k]:.6f}" for k in ks) + " |")
    if report.timing_stats:
        lines.extend(["", "## Stage timings", "",
                      "| stage | mean ms | median ms |", "|---|---|---|"])
        for stage, stats in sorted(report.timing_stats.items()):
            lines.append(f"| {stage} | {stats['mean_ms']:.3f} | "
                         f"{stats['median_ms']:.3f} |")
    lines.append("")
    return "\n".join(lines)


def emit_report(report: EvalReport, fmt: str, path: str | Path) -> None:
    """Write the report as json (lossless), csv (one row per record plus
    per-group and overall aggregate rows), or markdown."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True)
                        + "\n", encoding="utf-8")
    elif fmt == "markdown":
        path.write_text(render_markdown(report), encoding="utf-8")
    elif fmt == "csv":
        metrics = report.metric_names()
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["record_id", "category", "group", "failed",
                             *metrics])
            for record in report.records:
                writer.writerow([record.record_id, record.category,
                                 record.group, str(record.failed).lower(),
                                 *[_format_cell(record.metrics.get(m))
                                   for m in metrics]])
            for group in [g for g in REPORT_GROUPS
                          if g in report.category_counts]:
                writer.writerow([f"aggregate:{group}", group, group, "",
                                 *[_format_cell(report.category_aggregates
                                                .get(group, {}).get(m))
                                   for m in metrics]])
            writer.writerow(["aggregate:all", "", "", "",
                             *[_format_cell(report.overall.get(m))
                               for m in metrics]])
    else:
        raise ValueError(f"unknown report format {fmt!r}")
