import { describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("queries pending prompts for the configured subject", async () => {
    const fetchFn = vi.fn().mockResolvedValue(
      jsonResponse({ subject: "s01", now_ms: 5, prompts: [] }),
    );
    const api = new ApiClient("http://h:1/", "s01", fetchFn);
    const pending = await api.pending();
    expect(pending.prompts).toEqual([]);
    expect(fetchFn).toHaveBeenCalledWith(
      "http://h:1/api/v1/ema/pending?subject=s01",
    );
  });

  it("posts responses with the wire field names", async () => {
    const fetchFn = vi.fn().mockResolvedValue(
      jsonResponse({ recorded: true, responded_at_ms: 99 }),
    );
    const api = new ApiClient("http://h:1", "s01", fetchFn);
    const result = await api.submitResponse("p:1", 3, "walking");
    expect(result).toEqual({ ok: true, respondedAtMs: 99 });
    const [url, init] = fetchFn.mock.calls[0];
    expect(url).toBe("http://h:1/api/v1/ema/response");
    expect(JSON.parse(init.body)).toEqual({
      prompt_id: "p:1",
      stress_level: 3,
      activity: "walking",
    });
  });

  it("surfaces server rejections verbatim instead of throwing", async () => {
    const fetchFn = vi.fn().mockResolvedValue(
      jsonResponse({ detail: "prompt 'p:1' expired at 12345" }, 410),
    );
    const api = new ApiClient("http://h:1", "s01", fetchFn);
    const result = await api.submitResponse("p:1", 1, "sitting");
    expect(result).toEqual({
      ok: false,
      status: 410,
      detail: "prompt 'p:1' expired at 12345",
    });
  });

  it("returns null stats when the endpoint is unavailable", async () => {
    const fetchFn = vi.fn().mockResolvedValue(jsonResponse({}, 500));
    const api = new ApiClient("http://h:1", "s01", fetchFn);
    expect(await api.stats()).toBeNull();
  });

  it("reports health as false on network failure", async () => {
    const fetchFn = vi.fn().mockRejectedValue(new Error("refused"));
    const api = new ApiClient("http://h:1", "s01", fetchFn);
    expect(await api.health()).toBe(false);
  });
});
