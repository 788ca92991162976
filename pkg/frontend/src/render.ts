/** Pure HTML-string builders. Everything shown comes verbatim from the
 * API payloads: no client-side re-ranking, re-scoring, or truncation. */

import type { Exchange } from "./session.js";
import type {
  ChunkDetail,
  Overrides,
  QueryCandidate,
  QueryResponse,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function formatScore(value: number | null): string {
  return value === null ? "-" : value.toFixed(4);
}

export function renderBreadcrumb(headingPath: string[]): string {
  const segments = headingPath.map(
    (part) => `<span class="crumb">${escapeHtml(part)}</span>`);
  return `<nav class="breadcrumb">${segments.join(" &rsaquo; ")}</nav>`;
}

export function renderTimings(timings: Record<string, number>): string {
  const stages = Object.keys(timings).sort();
  const total = stages.reduce((sum, stage) => sum + (timings[stage] ?? 0), 0);
  const bars = stages.map((stage) => {
    const ms = timings[stage] ?? 0;
    const share = total > 0 ? (100 * ms) / total : 0;
    return (
      `<span class="timing-stage" data-stage="${escapeHtml(stage)}"` +
      ` style="width: ${share.toFixed(1)}%"` +
      ` title="${escapeHtml(stage)}: ${ms.toFixed(1)} ms"></span>`
    );
  });
  const labels = stages.map(
    (stage) =>
      `<span class="timing-label">${escapeHtml(stage)} ` +
      `${(timings[stage] ?? 0).toFixed(1)} ms</span>`);
  return (
    `<div class="timings"><div class="timing-bar">${bars.join("")}</div>` +
    `<div class="timing-labels">${labels.join(" ")}</div></div>`
  );
}

function renderEvidence(candidate: QueryCandidate): string {
  const cells = [
    `lexical rank ${candidate.lexical_rank ?? "-"} ` +
      `(${formatScore(candidate.lexical_score)})`,
    `semantic rank ${candidate.semantic_rank ?? "-"} ` +
      `(${formatScore(candidate.semantic_score)})`,
  ];
  return `<p class="evidence">${cells.map(escapeHtml).join(" | ")}</p>`;
}

export function renderCandidate(candidate: QueryCandidate): string {
  const summary =
    `<span class="rank">${candidate.rank}.</span> ` +
    `<button class="chunk-link" data-chunk-id="${escapeHtml(candidate.chunk_id)}">` +
    `${escapeHtml(candidate.chunk_id)}</button> ` +
    `<span class="scores">rerank=${formatScore(candidate.rerank_score)} ` +
    `rrf=${formatScore(candidate.rrf_score)}</span>`;
  return (
    `<details class="candidate"><summary>${summary}</summary>` +
    renderBreadcrumb(candidate.heading_path) +
    renderEvidence(candidate) +
    `<pre class="chunk-text">${escapeHtml(candidate.text)}</pre></details>`
  );
}

function renderAnswer(response: QueryResponse): string {
  if (response.error) {
    return (
      `<div class="answer answer-error">` +
      `<p>generation failed at stage ${escapeHtml(response.error.stage)}: ` +
      `${escapeHtml(response.error.message)}</p></div>`
    );
  }
  if (response.candidates.length === 0) {
    return (
      `<div class="answer not-found">` +
      `<p>${escapeHtml(response.answer)}</p></div>`
    );
  }
  return `<div class="answer"><p>${escapeHtml(response.answer)}</p></div>`;
}

export function renderExchange(exchange: Exchange): string {
  const parts = [
    `<h3 class="question">${escapeHtml(exchange.question)}</h3>`,
  ];
  if (exchange.error) {
    const retry = exchange.error.retryable
      ? ` <button class="retry" data-question="${escapeHtml(exchange.question)}">retry</button>`
      : "";
    parts.push(
      `<div class="exchange-error">` +
        `<p>[${escapeHtml(exchange.error.stage)}] ` +
        `${escapeHtml(exchange.error.message)}${retry}</p></div>`);
  } else if (exchange.response) {
    const response = exchange.response;
    parts.push(renderAnswer(response));
    for (const warning of response.warnings) {
      parts.push(`<p class="warning">${escapeHtml(warning)}</p>`);
    }
    if (response.candidates.length > 0) {
      parts.push(
        `<div class="candidates">` +
          response.candidates.map(renderCandidate).join("") +
          `</div>`);
    }
    parts.push(renderTimings(response.timings_ms));
    parts.push(
      `<p class="config-hash">config ` +
        `${escapeHtml(response.config_hash.slice(0, 12))}</p>`);
  }
  return `<article class="exchange">${parts.join("")}</article>`;
}

export function renderChunkDetail(chunk: ChunkDetail): string {
  return (
    `<div class="chunk-detail">` +
    renderBreadcrumb(chunk.heading_path) +
    `<p class="chunk-meta">${escapeHtml(chunk.id)} &middot; ` +
    `${escapeHtml(chunk.source_path)} &middot; ` +
    `${chunk.token_count} tokens</p>` +
    `<pre class="chunk-text">${escapeHtml(chunk.text)}</pre></div>`
  );
}

export function renderChunkError(chunkId: string, message: string): string {
  return (
    `<div class="chunk-detail chunk-missing">` +
    `<p>chunk ${escapeHtml(chunkId)} not available: ` +
    `${escapeHtml(message)}</p></div>`
  );
}

export function renderOverrides(overrides: Overrides): string {
  const entries = Object.entries(overrides);
  if (entries.length === 0) {
    return `<span class="overrides-none">service defaults</span>`;
  }
  return entries
    .map(
      ([key, value]) =>
        `<span class="override-chip">${escapeHtml(key)}=` +
        `${escapeHtml(String(value))}</span>`)
    .join(" ");
}
