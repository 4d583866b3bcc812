// Mirrors the server's EMA vocabulary exactly; stress level index = wire value.
export const STRESS_LEVELS = [
  "not at all",
  "a little bit",
  "some",
  "a lot",
  "extremely",
] as const;

export const ACTIVITIES = [
  "sitting",
  "standing",
  "walking",
  "running",
  "lying",
  "other",
] as const;

export type StressLevel = 0 | 1 | 2 | 3 | 4;
export type Activity = (typeof ACTIVITIES)[number];

export const DEFAULT_POLL_INTERVAL_MS = 30_000;
