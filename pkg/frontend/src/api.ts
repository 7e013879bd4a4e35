// Thin typed client for /api/v1. All server interaction goes through here;
// the UI never touches documents directly (shielding by construction).

import type {
  ContextPayload,
  NextItemPayload,
  ProgressPayload,
  ValidationBody,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface SubmitResult {
  status: number;
  ok: boolean;
  stale: boolean;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init)
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/api/v1${path}`;
  }

  async nextItem(annotatorId: string): Promise<NextItemPayload> {
    const response = await this.fetchImpl(
      this.url(`/items/next?annotator_id=${encodeURIComponent(annotatorId)}`)
    );
    if (!response.ok) throw new Error(`items/next failed: ${response.status}`);
    return (await response.json()) as NextItemPayload;
  }

  async context(groupId: string, radius = 500): Promise<ContextPayload> {
    const response = await this.fetchImpl(
      this.url(`/groups/${encodeURIComponent(groupId)}/context?radius=${radius}`)
    );
    if (!response.ok) throw new Error(`context failed: ${response.status}`);
    return (await response.json()) as ContextPayload;
  }

  async submitValidation(body: ValidationBody): Promise<SubmitResult> {
    const response = await this.fetchImpl(this.url("/validations"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return { status: response.status, ok: response.ok, stale: response.status === 409 };
  }

  async progress(): Promise<ProgressPayload> {
    const response = await this.fetchImpl(this.url("/progress"));
    if (!response.ok) throw new Error(`progress failed: ${response.status}`);
    return (await response.json()) as ProgressPayload;
  }
}
