/** Console session state: an append-only exchange history, the active
 * config overrides (applied to every subsequent request), and a
 * one-in-flight-query guard. No DOM access here. */

import { ApiError } from "./api.js";
import type {
  Overrides,
  OverrideValue,
  QueryRequestBody,
  QueryResponse,
} from "./types.js";

export interface ExchangeError {
  message: string;
  code: string;
  stage: string;
  retryable: boolean;
}

export interface Exchange {
  readonly question: string;
  readonly response: QueryResponse | null;
  readonly error: ExchangeError | null;
}

export const DEFAULT_OVERRIDE_KEYS = [
  "lexical_k",
  "semantic_k",
  "rerank_k",
  "rrf_const",
  "token_budget",
  "rerank_backend",
];

interface QueryClient {
  query(question: string, overrides?: Overrides): Promise<QueryResponse>;
}

function toExchangeError(err: unknown): ExchangeError {
  if (err instanceof ApiError) {
    return { message: err.message, code: err.code, stage: err.stage,
      retryable: err.retryable };
  }
  const message = err instanceof Error ? err.message : String(err);
  return { message, code: "unknown", stage: "client", retryable: false };
}

export class ConsoleSession {
  private readonly history: Exchange[] = [];
  private readonly overridesByKey: Map<string, OverrideValue> = new Map();
  private allowedKeys: Set<string>;
  private inFlight = false;

  constructor(
    private readonly client: QueryClient,
    allowedOverrideKeys: string[] = DEFAULT_OVERRIDE_KEYS,
  ) {
    this.allowedKeys = new Set(allowedOverrideKeys);
  }

  get exchanges(): readonly Exchange[] {
    return this.history;
  }

  get pending(): boolean {
    return this.inFlight;
  }

  get overrides(): Overrides {
    return Object.fromEntries(this.overridesByKey);
  }

  /** Restrict override keys to what /api/config advertises. */
  setAllowedOverrideKeys(keys: string[]): void {
    this.allowedKeys = new Set(keys);
    for (const key of [...this.overridesByKey.keys()]) {
      if (!this.allowedKeys.has(key)) {
        this.overridesByKey.delete(key);
      }
    }
  }

  setOverride(key: string, value: OverrideValue): void {
    if (!this.allowedKeys.has(key)) {
      throw new Error(`override not supported by the service: ${key}`);
    }
    this.overridesByKey.set(key, value);
  }

  clearOverride(key: string): void {
    this.overridesByKey.delete(key);
  }

  /** The exact payload the next submit will send. */
  requestBody(question: string): QueryRequestBody {
    const body: QueryRequestBody = { question };
    if (this.overridesByKey.size > 0) {
      body.overrides = this.overrides;
    }
    return body;
  }

  /** Run one query. Errors become part of the exchange history instead of
   * destroying it; only one query may be in flight at a time. */
  async submit(question: string): Promise<Exchange> {
    const trimmed = question.trim();
    if (!trimmed) {
      throw new Error("question must be non-empty");
    }
    if (this.inFlight) {
      throw new Error("a query is already in flight");
    }
    this.inFlight = true;
    try {
      const body = this.requestBody(trimmed);
      const response = await this.client.query(body.question, body.overrides);
      return this.append({ question: trimmed, response, error: null });
    } catch (err) {
      return this.append({
        question: trimmed,
        response: null,
        error: toExchangeError(err),
      });
    } finally {
      this.inFlight = false;
    }
  }

  private append(exchange: Exchange): Exchange {
    const frozen = Object.freeze(exchange);
    this.history.push(frozen);
    return frozen;
  }
}
