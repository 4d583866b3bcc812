// DOM rendering.  Every card is rendered from a server-issued prompt in the
// store snapshot; the UI never invents prompt ids.

import type { SessionSnapshot, PromptCard } from "./state.js";
import type { SessionStore } from "./state.js";
import { ACTIVITIES, STRESS_LEVELS, type Activity, type StressLevel } from "./constants.js";

function formatCountdown(remainingMs: number): string {
  const total = Math.max(0, Math.floor(remainingMs / 1000));
  const minutes = Math.floor(total / 60);
  const seconds = total % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

function cardRemainingMs(card: PromptCard): number {
  return card.prompt.expires_at_ms - card.serverNowMs;
}

export function renderCard(card: PromptCard, store: SessionStore): HTMLElement {
  const root = document.createElement("article");
  root.className = `prompt-card ${card.status}`;
  root.dataset.promptId = card.prompt.prompt_id;

  const heading = document.createElement("h3");
  heading.textContent = "How stressed are you right now?";
  root.appendChild(heading);

  const countdown = document.createElement("p");
  countdown.className = "countdown";
  countdown.textContent =
    card.status === "expired"
      ? "expired"
      : `expires in ${formatCountdown(cardRemainingMs(card))}`;
  root.appendChild(countdown);

  const levelGroup = document.createElement("fieldset");
  levelGroup.className = "levels";
  STRESS_LEVELS.forEach((label, value) => {
    const option = document.createElement("label");
    const radio = document.createElement("input");
    radio.type = "radio";
    radio.name = `level-${card.prompt.prompt_id}`;
    radio.value = String(value);
    option.appendChild(radio);
    option.appendChild(document.createTextNode(label));
    levelGroup.appendChild(option);
  });
  root.appendChild(levelGroup);

  const activitySelect = document.createElement("select");
  activitySelect.className = "activity";
  const placeholder = document.createElement("option");
  placeholder.value = "";
  placeholder.textContent = "current activity…";
  activitySelect.appendChild(placeholder);
  for (const activity of ACTIVITIES) {
    const option = document.createElement("option");
    option.value = activity;
    option.textContent = activity;
    activitySelect.appendChild(option);
  }
  root.appendChild(activitySelect);

  const submit = document.createElement("button");
  submit.textContent = card.status === "submitting" ? "sending…" : "submit";
  submit.disabled = card.status !== "open";
  submit.addEventListener("click", () => {
    const chosen = levelGroup.querySelector<HTMLInputElement>("input:checked");
    if (!chosen || !activitySelect.value) {
      error.textContent = "pick a stress level and an activity first";
      return;
    }
    submit.disabled = true; // no second request while this one is in flight
    void store.submit(
      card.prompt.prompt_id,
      Number(chosen.value) as StressLevel,
      activitySelect.value as Activity,
    );
  });
  root.appendChild(submit);

  const error = document.createElement("p");
  error.className = "card-error";
  error.textContent = card.error ?? "";
  root.appendChild(error);

  if (card.status === "expired") {
    for (const input of root.querySelectorAll("input, select, button")) {
      (input as HTMLInputElement).disabled = true;
    }
  }
  return root;
}

function sparkline(perDay: { day: string; count: number }[]): SVGElement {
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("class", "sparkline");
  svg.setAttribute("viewBox", "0 0 120 24");
  const counts = perDay.map((d) => d.count);
  const max = Math.max(1, ...counts);
  const step = counts.length > 1 ? 120 / (counts.length - 1) : 0;
  const points = counts
    .map((c, i) => `${(i * step).toFixed(1)},${(22 - (c / max) * 20).toFixed(1)}`)
    .join(" ");
  const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
  line.setAttribute("points", points || "0,22");
  line.setAttribute("fill", "none");
  line.setAttribute("stroke", "currentColor");
  svg.appendChild(line);
  return svg;
}

export function render(
  container: HTMLElement,
  snapshot: SessionSnapshot,
  store: SessionStore,
): void {
  container.textContent = "";

  const banner = document.createElement("div");
  banner.className = "banner";
  if (!snapshot.connected) {
    banner.classList.add("error");
    banner.textContent = `connection problem: ${snapshot.lastError ?? "unknown"} (retrying)`;
  } else if (snapshot.lastError) {
    banner.classList.add("warning");
    banner.textContent = snapshot.lastError;
  }
  container.appendChild(banner);

  const list = document.createElement("section");
  list.className = "prompt-list";
  if (snapshot.cards.length === 0) {
    const idle = document.createElement("p");
    idle.className = "idle";
    idle.textContent = "no prompts right now";
    list.appendChild(idle);
  } else {
    for (const card of snapshot.cards) {
      list.appendChild(renderCard(card, store));
    }
  }
  container.appendChild(list);

  const statsPanel = document.createElement("section");
  statsPanel.className = "stats";
  if (snapshot.stats) {
    const s = snapshot.stats;
    const line = document.createElement("p");
    line.textContent =
      `answered ${s.answered} · expired ${s.expired} · ` +
      `pending ${s.pending} · this session ${snapshot.answeredThisSession}`;
    statsPanel.appendChild(line);
    statsPanel.appendChild(sparkline(s.labels_per_day));
  } else {
    statsPanel.hidden = true;
  }
  container.appendChild(statsPanel);
}

/** Title badge plus a short beep when new prompts arrive. */
export function notifyNewPrompts(count: number): void {
  if (count <= 0) {
    return;
  }
  document.title = `(${count}) stress check-in`;
  try {
    const ctx = new AudioContext();
    const osc = ctx.createOscillator();
    osc.frequency.value = 880;
    osc.connect(ctx.destination);
    osc.start();
    osc.stop(ctx.currentTime + 0.15);
  } catch {
    // no audio permission: the title badge is the fallback
  }
}
