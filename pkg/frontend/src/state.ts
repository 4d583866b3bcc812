// Session store: owns the poll loop, the prompt-card lifecycle and the
// session counters.  Rendering subscribes via onChange; nothing here touches
// the DOM, so the store runs as-is under node for integration tests.

import type { ApiClient, PendingPrompt, SubjectStats } from "./api.js";
import type { Activity, StressLevel } from "./constants.js";
import { DEFAULT_POLL_INTERVAL_MS } from "./constants.js";

export type CardStatus = "open" | "submitting" | "answered" | "expired";

export interface PromptCard {
  prompt: PendingPrompt;
  status: CardStatus;
  /** serverNowMs at the last poll; countdowns derive from this, not the
   *  browser clock, so client clock skew cannot mislabel a card. */
  serverNowMs: number;
  error?: string;
}

export interface SessionSnapshot {
  cards: PromptCard[];
  stats: SubjectStats | null;
  answeredThisSession: number;
  connected: boolean;
  lastError?: string;
  newPromptCount: number;
}

type Listener = (snapshot: SessionSnapshot) => void;

export class SessionStore {
  private cards = new Map<string, PromptCard>();
  private stats: SubjectStats | null = null;
  private answeredThisSession = 0;
  private connected = true;
  private lastError: string | undefined;
  private newPromptCount = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private backoffFactor = 1;
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly pollIntervalMs: number = DEFAULT_POLL_INTERVAL_MS,
  ) {}

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  snapshot(): SessionSnapshot {
    const cards = [...this.cards.values()].sort(
      (a, b) => a.prompt.created_at_ms - b.prompt.created_at_ms,
    );
    return {
      cards,
      stats: this.stats,
      answeredThisSession: this.answeredThisSession,
      connected: this.connected,
      lastError: this.lastError,
      newPromptCount: this.newPromptCount,
    };
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) {
      listener(snap);
    }
  }

  start(): void {
    this.stop();
    const tick = async () => {
      await this.pollOnce();
      const delay = this.pollIntervalMs * this.backoffFactor;
      this.timer = setTimeout(tick, delay);
    };
    void tick();
  }

  stop(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** One poll round: reconcile open cards against the server's pending list
   *  and refresh the stats panel.  Open cards the server no longer lists
   *  (and that we did not answer) have expired server-side. */
  async pollOnce(): Promise<void> {
    let pending;
    try {
      pending = await this.api.pending();
      this.connected = true;
      this.lastError = undefined;
      this.backoffFactor = 1;
    } catch (err) {
      this.connected = false;
      this.lastError = err instanceof Error ? err.message : String(err);
      this.backoffFactor = Math.min(this.backoffFactor * 2, 8);
      this.emit();
      return;
    }

    const listed = new Set<string>();
    this.newPromptCount = 0;
    for (const prompt of pending.prompts) {
      listed.add(prompt.prompt_id);
      const existing = this.cards.get(prompt.prompt_id);
      if (existing) {
        existing.prompt = prompt;
        existing.serverNowMs = pending.now_ms;
      } else {
        this.cards.set(prompt.prompt_id, {
          prompt,
          status: "open",
          serverNowMs: pending.now_ms,
        });
        this.newPromptCount += 1;
      }
    }
    for (const card of this.cards.values()) {
      if (card.status === "open" && !listed.has(card.prompt.prompt_id)) {
        card.status = "expired";
      }
      card.serverNowMs = pending.now_ms;
    }

    this.stats = await this.api.stats();
    this.emit();
  }

  /** Submit one answer.  The card is locked while the request is in flight,
   *  so a double-click cannot produce two requests.  A server rejection is
   *  surfaced verbatim on the card and the card is not cleared silently. */
  async submit(
    promptId: string,
    stressLevel: StressLevel,
    activity: Activity,
  ): Promise<boolean> {
    const card = this.cards.get(promptId);
    if (!card || card.status !== "open") {
      return false;
    }
    card.status = "submitting";
    this.emit();
    const result = await this.api.submitResponse(promptId, stressLevel, activity);
    if (result.ok) {
      this.cards.delete(promptId);
      this.answeredThisSession += 1;
      this.stats = await this.api.stats();
      this.emit();
      return true;
    }
    card.status = result.status === 410 ? "expired" : "open";
    card.error = result.detail;
    this.lastError = result.detail;
    this.emit();
    return false;
  }
}
