/** Typed client for the screening engine's local HTTP API. */

export const API_PREFIX = "/api/v1";

export interface SessionStatus {
  session: string;
  n_iterations: number;
  has_annotation: boolean;
  n_records: number;
  n_pos: number;
  n_neg: number;
  needs_review: number;
  replications: number;
  last_timestamp: string | null;
  iterating?: boolean;
  last_outcome?: { status: string; [key: string]: unknown } | null;
}

export interface QueueRecord {
  id: string;
  title: string;
  abstract: string | null;
  authors: string | null;
  year: number | null;
  doi: string | null;
  pred_low: number | null;
  pred_med: number | null;
  pred_up: number | null;
}

export interface RecordPage {
  total: number;
  offset: number;
  records: QueueRecord[];
}

export interface RuleRow {
  group: number;
  rule: string;
  n_pos: number;
  n_neg: number;
  cumulative_pos: number;
  selected_rule: string | boolean;
  edited_rule: string;
}

export interface DensityGroup {
  x: number[];
  density: number[];
}

export interface TrendRow {
  iteration: number;
  timestamp: string;
  n_pos: number;
  n_neg: number;
  total_labelled: number;
  pct_labelled: number;
}

export interface PerformancePayload {
  rows: Array<Record<string, string>>;
  converged: boolean;
  curve?: Record<string, number[]>;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(API_PREFIX + path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail =
      typeof body === "object" && body !== null && "detail" in body
        ? String((body as { detail: unknown }).detail)
        : response.statusText;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export function listSessions(): Promise<{ sessions: SessionStatus[] }> {
  return request("/sessions");
}

export function getStatus(session: string): Promise<SessionStatus> {
  return request(`/sessions/${encodeURIComponent(session)}/status`);
}

export function getQueue(
  session: string,
  offset = 0,
  limit = 50,
): Promise<RecordPage> {
  const q = `?status=needs_review&offset=${offset}&limit=${limit}`;
  return request(`/sessions/${encodeURIComponent(session)}/records${q}`);
}

export function postLabel(
  session: string,
  recordId: string,
  label: "y" | "n",
): Promise<{ record_id: string; rev_manual: string }> {
  return request(`/sessions/${encodeURIComponent(session)}/labels`, {
    method: "POST",
    body: JSON.stringify({ record_id: recordId, label }),
  });
}

export function postIterate(
  session: string,
  stopOnUnreviewed: boolean,
): Promise<{ status: string }> {
  return request(`/sessions/${encodeURIComponent(session)}/iterate`, {
    method: "POST",
    body: JSON.stringify({ stop_on_unreviewed: stopOnUnreviewed }),
  });
}

export function getDensities(
  session: string,
): Promise<{ densities: Record<string, DensityGroup> }> {
  return request(`/sessions/${encodeURIComponent(session)}/densities`);
}

export function getTrends(
  session: string,
): Promise<{ iterations: TrendRow[] }> {
  return request(`/sessions/${encodeURIComponent(session)}/trends`);
}

export function getPerformance(session: string): Promise<PerformancePayload> {
  return request(`/sessions/${encodeURIComponent(session)}/performance`);
}

export function getRules(session: string): Promise<{ rules: RuleRow[] }> {
  return request(`/sessions/${encodeURIComponent(session)}/rules`);
}

export function generateRules(session: string): Promise<{ rules: RuleRow[] }> {
  return request(`/sessions/${encodeURIComponent(session)}/rules`, {
    method: "POST",
  });
}

export function postSelection(
  session: string,
  selected: string[],
  edited: Record<string, string>,
): Promise<{ rendered: Record<string, string> }> {
  return request(`/sessions/${encodeURIComponent(session)}/rules/selection`, {
    method: "POST",
    body: JSON.stringify({ selected, edited }),
  });
}
