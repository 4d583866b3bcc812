// Bootstrap: settings panel (server URL + subject token), store, render loop.

import { ApiClient } from "./api.js";
import { DEFAULT_POLL_INTERVAL_MS } from "./constants.js";
import { SessionStore } from "./state.js";
import { notifyNewPrompts, render } from "./ui.js";

const SETTINGS_KEY = "stressmon-ema-settings";

interface Settings {
  serverUrl: string;
  subjectToken: string;
}

function loadSettings(): Settings {
  try {
    const raw = localStorage.getItem(SETTINGS_KEY);
    if (raw) {
      return JSON.parse(raw) as Settings;
    }
  } catch {
    // fall through to defaults
  }
  return { serverUrl: "http://127.0.0.1:8430", subjectToken: "" };
}

function saveSettings(settings: Settings): void {
  localStorage.setItem(SETTINGS_KEY, JSON.stringify(settings));
}

let store: SessionStore | null = null;

function connect(settings: Settings, root: HTMLElement): void {
  store?.stop();
  if (!settings.subjectToken) {
    root.textContent = "enter your subject token to begin";
    return;
  }
  const api = new ApiClient(settings.serverUrl, settings.subjectToken);
  const session = new SessionStore(api, DEFAULT_POLL_INTERVAL_MS);
  store = session;
  session.onChange((snapshot) => {
    render(root, snapshot, session);
    notifyNewPrompts(snapshot.newPromptCount);
  });
  session.start();
}

export function boot(): void {
  const settingsForm = document.querySelector<HTMLFormElement>("#settings");
  const urlInput = document.querySelector<HTMLInputElement>("#server-url");
  const tokenInput = document.querySelector<HTMLInputElement>("#subject-token");
  const root = document.querySelector<HTMLElement>("#app");
  if (!settingsForm || !urlInput || !tokenInput || !root) {
    throw new Error("index.html is missing required elements");
  }

  const settings = loadSettings();
  urlInput.value = settings.serverUrl;
  tokenInput.value = settings.subjectToken;

  settingsForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const next = {
      serverUrl: urlInput.value.trim(),
      subjectToken: tokenInput.value.trim(),
    };
    saveSettings(next);
    connect(next, root);
  });

  connect(settings, root);
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
