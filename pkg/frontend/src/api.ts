/** Thin typed client over the service HTTP API. All knowledge about
 * retrieval lives server-side; this file only moves JSON. */

import type {
  ChunkDetail,
  ConfigInfo,
  HealthInfo,
  Overrides,
  QueryRequestBody,
  QueryResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly code: string,
    readonly stage: string,
    readonly status: number | null,
    readonly retryable: boolean = false,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

interface ErrorPayload {
  code?: unknown;
  message?: unknown;
  stage?: unknown;
}

async function errorFromResponse(response: Response): Promise<ApiError> {
  let payload: ErrorPayload = {};
  try {
    payload = (await response.json()) as ErrorPayload;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  const message =
    typeof payload.message === "string"
      ? payload.message
      : `request failed with status ${response.status}`;
  const code = typeof payload.code === "string" ? payload.code : "http_error";
  const stage = typeof payload.stage === "string" ? payload.stage : "request";
  return new ApiError(message, code, stage, response.status,
    response.status >= 500);
}

export class ConsoleApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      throw new ApiError(`service unreachable: ${reason}`, "network",
        "transport", null, true);
    }
    if (!response.ok) {
      throw await errorFromResponse(response);
    }
    return (await response.json()) as T;
  }

  query(question: string, overrides?: Overrides): Promise<QueryResponse> {
    const body: QueryRequestBody = { question };
    if (overrides && Object.keys(overrides).length > 0) {
      body.overrides = overrides;
    }
    return this.request<QueryResponse>("/api/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  chunk(chunkId: string): Promise<ChunkDetail> {
    return this.request<ChunkDetail>(
      `/api/chunks/${encodeURIComponent(chunkId)}`);
  }

  config(): Promise<ConfigInfo> {
    return this.request<ConfigInfo>("/api/config");
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/api/health");
  }
}
