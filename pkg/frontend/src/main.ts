/** DOM wiring for the console: submit questions, maintain the override
 * form from /api/config, append rendered exchanges, inspect chunks. */

import { ApiError, ConsoleApiClient } from "./api.js";
import {
  renderChunkDetail,
  renderChunkError,
  renderExchange,
  renderOverrides,
} from "./render.js";
import { ConsoleSession } from "./session.js";
import type { OverrideValue } from "./types.js";

const NUMERIC_KEYS = new Set([
  "lexical_k", "semantic_k", "rerank_k", "rrf_const", "token_budget",
]);

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

async function boot(): Promise<void> {
  const client = new ConsoleApiClient("");
  const session = new ConsoleSession(client);

  const form = byId<HTMLFormElement>("ask-form");
  const input = byId<HTMLInputElement>("question");
  const submit = byId<HTMLButtonElement>("submit");
  const historyEl = byId<HTMLDivElement>("history");
  const overridesForm = byId<HTMLDivElement>("overrides");
  const overridesState = byId<HTMLSpanElement>("overrides-state");
  const detailEl = byId<HTMLDivElement>("chunk-detail");
  const statusEl = byId<HTMLSpanElement>("service-status");

  function refreshOverridesState(): void {
    overridesState.innerHTML = renderOverrides(session.overrides);
  }

  function overrideInput(key: string, backends: string[]): HTMLElement {
    const label = document.createElement("label");
    label.textContent = `${key} `;
    let field: HTMLInputElement | HTMLSelectElement;
    if (key === "rerank_backend") {
      field = document.createElement("select");
      const blank = document.createElement("option");
      blank.value = "";
      blank.textContent = "(default)";
      field.appendChild(blank);
      for (const backend of backends) {
        const option = document.createElement("option");
        option.value = backend;
        option.textContent = backend;
        field.appendChild(option);
      }
    } else {
      field = document.createElement("input");
      field.type = NUMERIC_KEYS.has(key) ? "number" : "text";
      field.placeholder = "default";
    }
    field.name = key;
    field.addEventListener("change", () => {
      const raw = field.value.trim();
      if (!raw) {
        session.clearOverride(key);
      } else {
        const value: OverrideValue = NUMERIC_KEYS.has(key)
          ? Number(raw) : raw;
        session.setOverride(key, value);
      }
      refreshOverridesState();
    });
    label.appendChild(field);
    return label;
  }

  async function loadConfig(): Promise<void> {
    try {
      const [config, health] = await Promise.all([
        client.config(), client.health()]);
      session.setAllowedOverrideKeys(config.overridable_keys);
      overridesForm.replaceChildren(
        ...config.overridable_keys.map(
          (key) => overrideInput(key, config.rerank_backends)));
      statusEl.textContent =
        `${health.chunks} chunks indexed, config ` +
        `${health.config_hash.slice(0, 12)}`;
    } catch (err) {
      statusEl.textContent = err instanceof ApiError
        ? `service unavailable: ${err.message}` : "service unavailable";
    }
  }

  async function ask(question: string): Promise<void> {
    submit.disabled = true;
    try {
      const exchange = await session.submit(question);
      const article = document.createElement("div");
      article.innerHTML = renderExchange(exchange);
      historyEl.prepend(article);
    } finally {
      submit.disabled = false;
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const question = input.value.trim();
    if (!question || session.pending) {
      return;
    }
    void ask(question);
  });

  historyEl.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const chunkId = target.dataset["chunkId"];
    if (chunkId) {
      void inspectChunk(chunkId);
      return;
    }
    const retryQuestion = target.dataset["question"];
    if (retryQuestion && !session.pending) {
      void ask(retryQuestion);
    }
  });

  async function inspectChunk(chunkId: string): Promise<void> {
    try {
      const chunk = await client.chunk(chunkId);
      detailEl.innerHTML = renderChunkDetail(chunk);
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      detailEl.innerHTML = renderChunkError(chunkId, message);
    }
  }

  refreshOverridesState();
  await loadConfig();
}

document.addEventListener("DOMContentLoaded", () => {
  void boot();
});
