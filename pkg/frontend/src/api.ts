// Typed client for the ingest service's documented HTTP+JSON endpoints.

import type { Activity, StressLevel } from "./constants.js";

export interface PendingPrompt {
  prompt_id: string;
  subject_id: string;
  sample_id: string;
  created_at_ms: number;
  expires_at_ms: number;
  remaining_ms: number;
}

export interface PendingResponse {
  subject: string;
  now_ms: number;
  prompts: PendingPrompt[];
}

export interface SubjectStats {
  windows: number;
  usable: number;
  prompts: number;
  answered: number;
  expired: number;
  pending: number;
  labels_per_day: { day: string; count: number }[];
}

export type SubmitResult =
  | { ok: true; respondedAtMs: number }
  | { ok: false; status: number; detail: string };

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly subject: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string, params?: Record<string, string>): string {
    const query = params ? `?${new URLSearchParams(params)}` : "";
    return `${this.baseUrl.replace(/\/$/, "")}${path}${query}`;
  }

  async health(): Promise<boolean> {
    try {
      const res = await this.fetchFn(this.url("/healthz"));
      return res.ok;
    } catch {
      return false;
    }
  }

  async pending(): Promise<PendingResponse> {
    const res = await this.fetchFn(
      this.url("/api/v1/ema/pending", { subject: this.subject }),
    );
    if (!res.ok) {
      throw new ApiError(`pending query failed (${res.status})`, res.status);
    }
    return (await res.json()) as PendingResponse;
  }

  /** Submits one answer.  Server rejections (expired, duplicate, unknown)
   *  come back as `{ok: false}` with the server's own detail text; they are
   *  normal protocol outcomes, not exceptions. */
  async submitResponse(
    promptId: string,
    stressLevel: StressLevel,
    activity: Activity,
  ): Promise<SubmitResult> {
    const res = await this.fetchFn(this.url("/api/v1/ema/response"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        prompt_id: promptId,
        stress_level: stressLevel,
        activity,
      }),
    });
    const body = await res.json().catch(() => ({}));
    if (!res.ok) {
      const detail =
        typeof body?.detail === "string" ? body.detail : `HTTP ${res.status}`;
      return { ok: false, status: res.status, detail };
    }
    return { ok: true, respondedAtMs: body.responded_at_ms as number };
  }

  async stats(): Promise<SubjectStats | null> {
    const res = await this.fetchFn(
      this.url("/api/v1/stats", { subject: this.subject }),
    );
    if (!res.ok) {
      return null; // stats panel simply hides when unavailable
    }
    const payload = await res.json();
    return (payload.subjects?.[this.subject] as SubjectStats) ?? null;
  }
}
