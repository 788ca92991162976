/** Payload shapes mirrored from the service API; the console renders these
 * verbatim and adds nothing of its own. */

export interface QueryCandidate {
  chunk_id: string;
  rank: number;
  text: string;
  heading_path: string[];
  rrf_score: number;
  rerank_score: number;
  lexical_rank: number | null;
  semantic_rank: number | null;
  lexical_score: number | null;
  semantic_score: number | null;
}

export interface StageError {
  code: string;
  message: string;
  stage: string;
}

export interface QueryResponse {
  answer: string;
  candidates: QueryCandidate[];
  timings_ms: Record<string, number>;
  config_hash: string;
  warnings: string[];
  error: StageError | null;
  generation_info: Record<string, unknown> | null;
}

export interface ChunkDetail {
  id: string;
  source_path: string;
  heading_path: string[];
  text: string;
  token_count: number;
}

export interface ConfigInfo {
  config: Record<string, unknown>;
  config_hash: string;
  overridable_keys: string[];
  rerank_backends: string[];
}

export interface HealthInfo {
  status: string;
  chunks: number;
  indexed_terms: number;
  vector_count: number;
  vector_dim: number;
  config_hash: string;
}

export type OverrideValue = number | string;
export type Overrides = Record<string, OverrideValue>;

export interface QueryRequestBody {
  question: string;
  overrides?: Overrides;
}
