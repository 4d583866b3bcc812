// @vitest-environment happy-dom
import { describe, expect, it, vi } from "vitest";

import type { ApiClient } from "../src/api.js";
import { ACTIVITIES, STRESS_LEVELS } from "../src/constants.js";
import { SessionStore, type PromptCard } from "../src/state.js";
import { render, renderCard } from "../src/ui.js";

function card(status: PromptCard["status"] = "open"): PromptCard {
  return {
    prompt: {
      prompt_id: "p:s01:1000",
      subject_id: "s01",
      sample_id: "s01:1000",
      created_at_ms: 1000,
      expires_at_ms: 901_000,
      remaining_ms: 900_000,
    },
    status,
    serverNowMs: 1000,
  };
}

function store(): SessionStore {
  return new SessionStore({} as ApiClient, 30_000);
}

describe("renderCard", () => {
  it("renders all five stress levels verbatim", () => {
    const el = renderCard(card(), store());
    const labels = [...el.querySelectorAll(".levels label")].map(
      (l) => l.textContent,
    );
    expect(labels).toEqual([...STRESS_LEVELS]);
  });

  it("renders the full activity list", () => {
    const el = renderCard(card(), store());
    const options = [...el.querySelectorAll(".activity option")]
      .map((o) => (o as HTMLOptionElement).value)
      .filter((v) => v !== "");
    expect(options).toEqual([...ACTIVITIES]);
  });

  it("shows a countdown derived from server time", () => {
    const el = renderCard(card(), store());
    expect(el.querySelector(".countdown")?.textContent).toBe("expires in 15:00");
  });

  it("disables everything on an expired card", () => {
    const el = renderCard(card("expired"), store());
    expect(el.className).toContain("expired");
    for (const control of el.querySelectorAll("input, select, button")) {
      expect((control as HTMLInputElement).disabled).toBe(true);
    }
    expect(el.querySelector(".countdown")?.textContent).toBe("expired");
  });

  it("disables the submit button while a submission is in flight", () => {
    const el = renderCard(card("submitting"), store());
    const button = el.querySelector("button")!;
    expect(button.disabled).toBe(true);
    expect(button.textContent).toContain("sending");
  });

  it("requires both fields before submitting", () => {
    const s = store();
    const submitSpy = vi.spyOn(s, "submit");
    const el = renderCard(card(), s);
    document.body.appendChild(el);
    el.querySelector("button")!.click();
    expect(submitSpy).not.toHaveBeenCalled();
    expect(el.querySelector(".card-error")?.textContent).toContain("pick");
  });

  it("submits the chosen level and activity", () => {
    const s = store();
    const submitSpy = vi.spyOn(s, "submit").mockResolvedValue(true);
    const el = renderCard(card(), s);
    document.body.appendChild(el);
    const radios = el.querySelectorAll<HTMLInputElement>(".levels input");
    radios[3].checked = true;
    const select = el.querySelector<HTMLSelectElement>(".activity")!;
    select.value = "walking";
    el.querySelector("button")!.click();
    expect(submitSpy).toHaveBeenCalledWith("p:s01:1000", 3, "walking");
  });
});

describe("render", () => {
  it("shows the idle state with no prompts", () => {
    const root = document.createElement("div");
    render(root, {
      cards: [], stats: null, answeredThisSession: 0, connected: true,
      newPromptCount: 0,
    }, store());
    expect(root.querySelector(".idle")?.textContent).toContain("no prompts");
    expect(root.querySelector<HTMLElement>(".stats")?.hidden).toBe(true);
  });

  it("renders one card per server prompt and nothing else", () => {
    const root = document.createElement("div");
    render(root, {
      cards: [card()], stats: null, answeredThisSession: 0, connected: true,
      newPromptCount: 1,
    }, store());
    const cards = root.querySelectorAll(".prompt-card");
    expect(cards).toHaveLength(1);
    expect((cards[0] as HTMLElement).dataset.promptId).toBe("p:s01:1000");
  });

  it("shows the error banner when disconnected", () => {
    const root = document.createElement("div");
    render(root, {
      cards: [], stats: null, answeredThisSession: 0, connected: false,
      lastError: "fetch failed", newPromptCount: 0,
    }, store());
    expect(root.querySelector(".banner.error")?.textContent).toContain(
      "fetch failed",
    );
  });

  it("renders counts and the sparkline when stats are available", () => {
    const root = document.createElement("div");
    render(root, {
      cards: [],
      stats: {
        windows: 50, usable: 48, prompts: 9, answered: 5, expired: 2,
        pending: 2,
        labels_per_day: [{ day: "2026-01-01", count: 2 },
                         { day: "2026-01-02", count: 3 }],
      },
      answeredThisSession: 4,
      connected: true,
      newPromptCount: 0,
    }, store());
    const text = root.querySelector(".stats p")?.textContent ?? "";
    expect(text).toContain("answered 5");
    expect(text).toContain("expired 2");
    expect(text).toContain("this session 4");
    expect(root.querySelector(".sparkline polyline")).not.toBeNull();
  });
});
