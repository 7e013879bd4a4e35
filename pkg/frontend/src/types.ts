// Payload types mirroring the /api/v1 JSON contract. The server is the
// single source of truth; these shapes must track its golden fixtures.

export interface SpanPayload {
  start: number;
  end: number;
}

export interface GroupPayload {
  group_id: string;
  value: string;
  confidence: number;
  agreement: number;
  snippet: string;
  span: SpanPayload;
}

export interface ItemPayload {
  done: false;
  doc_id: string;
  variable_id: string;
  display_name: string;
  label_values: string[];
  negative_value: string | null;
  lf_total: number;
  groups: GroupPayload[];
}

export interface DonePayload {
  done: true;
}

export type NextItemPayload = ItemPayload | DonePayload;

export interface ContextPayload {
  group_id: string;
  doc_id: string;
  excerpt: string;
  span: SpanPayload;
  highlights: SpanPayload[];
}

export type Decision = "confirm" | "reject" | "no_evidence" | "manual";

export interface ValidationBody {
  record_id: string;
  doc_id: string;
  variable_id: string;
  group_id: string;
  decision: Decision;
  annotator_id: string;
  wall_time_ms: number;
  timestamp: number;
  value: string | null;
}

export interface ProgressPayload {
  pending: number;
  deferred_to_human: number;
  auto_accepted: number;
  validated: number;
  total: number;
  alerts: number;
}

export function isItem(payload: NextItemPayload): payload is ItemPayload {
  return payload.done === false;
}

export function isValidItemPayload(payload: unknown): payload is NextItemPayload {
  if (typeof payload !== "object" || payload === null) return false;
  const p = payload as Record<string, unknown>;
  if (p.done === true) return true;
  return (
    p.done === false &&
    typeof p.doc_id === "string" &&
    typeof p.variable_id === "string" &&
    typeof p.display_name === "string" &&
    Array.isArray(p.label_values) &&
    typeof p.lf_total === "number" &&
    Array.isArray(p.groups) &&
    (p.groups as unknown[]).every(
      (g) =>
        typeof g === "object" &&
        g !== null &&
        typeof (g as Record<string, unknown>).group_id === "string" &&
        typeof (g as Record<string, unknown>).snippet === "string" &&
        typeof (g as Record<string, unknown>).value === "string" &&
        typeof (g as Record<string, unknown>).agreement === "number"
    )
  );
}
