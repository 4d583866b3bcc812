"""Sensor-layer stand-in: synthesizes subject physiology on the watch cadence
(one 2-minute window every 15 minutes), streams windows to the service, and
optionally answers prompts from ground truth.

Dropout segments come in two modes: ``off`` (watch not worn, no windows) and
``buffer`` (store-and-forward: windows are captured on cadence but delivered
in a batch, with their original start times, once the segment ends).
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .query import ACTIVITIES
from .synth import synthesize_ppg
from .windows import RawWindow

WINDOW_PERIOD_MS = 15 * 60_000
WINDOW_DURATION_S = 120.0

# Stress level -> physiology defaults: heart rate climbs, beat-to-beat
# variability drops.  Synthetic convention, not a measured mapping.
HR_DELTA_BPM = (0.0, 10.0, 15.0, 20.0, 25.0)
RMSSD_SCALE = (1.0, 0.85, 0.75, 0.65, 0.55)


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    baseline_hr: float = 65.0
    baseline_rmssd_ms: float = 45.0
    # piecewise-constant ground truth: (offset_ms, level 0..4), sorted, first at 0
    stress_schedule: tuple = ((0, 0),)
    hr_delta_bpm: tuple = HR_DELTA_BPM
    rmssd_scale: tuple = RMSSD_SCALE
    adherence_prob: float = 1.0
    response_delay_mean_min: float = 3.0
    label_noise_prob: float = 0.0
    # (start_ms, end_ms, mode) with mode "off" | "buffer"
    dropout_segments: tuple = ()
    noise_rms: float = 0.08
    drift_amp: float = 0.3
    high_volume: bool = False

    def __post_init__(self):
        hr_range = [self.baseline_hr + d for d in self.hr_delta_bpm]
        if min(hr_range) < 42.0 or max(hr_range) > 210.0:
            raise ValueError(
                f"profile {self.subject_id}: stressed heart rate leaves 42-210 bpm")
        if not 0.0 <= self.adherence_prob <= 1.0:
            raise ValueError("adherence_prob must lie in [0, 1]")

    def level_at(self, offset_ms: int) -> int:
        level = self.stress_schedule[0][1]
        for start, lvl in self.stress_schedule:
            if offset_ms >= start:
                level = lvl
            else:
                break
        return int(level)

    def dropout_mode_at(self, offset_ms: int) -> str | None:
        for start, end, mode in self.dropout_segments:
            if start <= offset_ms < end:
                return mode
        return None

    def to_json(self) -> dict:
        return {"subject_id": self.subject_id, "baseline_hr": self.baseline_hr,
                "baseline_rmssd_ms": self.baseline_rmssd_ms,
                "stress_schedule": [list(x) for x in self.stress_schedule],
                "hr_delta_bpm": list(self.hr_delta_bpm),
                "rmssd_scale": list(self.rmssd_scale),
                "adherence_prob": self.adherence_prob,
                "response_delay_mean_min": self.response_delay_mean_min,
                "label_noise_prob": self.label_noise_prob,
                "dropout_segments": [list(x) for x in self.dropout_segments],
                "noise_rms": self.noise_rms, "drift_amp": self.drift_amp,
                "high_volume": self.high_volume}

    @classmethod
    def from_json(cls, payload: dict) -> "SubjectProfile":
        data = dict(payload)
        data["stress_schedule"] = tuple(tuple(x) for x in data.get(
            "stress_schedule", [[0, 0]]))
        data["dropout_segments"] = tuple(tuple(x) for x in data.get(
            "dropout_segments", []))
        for key in ("hr_delta_bpm", "rmssd_scale"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def load_profiles(path) -> list[SubjectProfile]:
    payload = json.loads(Path(path).read_text())
    if isinstance(payload, dict):
        payload = payload["profiles"]
    return [SubjectProfile.from_json(p) for p in payload]


def save_profiles(profiles, path) -> None:
    Path(path).write_text(json.dumps(
        {"profiles": [p.to_json() for p in profiles]}, indent=2) + "\n")


@dataclass
class SimClock:
    """Maps simulated time to wall time; acceleration 0 means free-running."""

    acceleration: float = 0.0
    _last_sim_ms: float = field(default=0.0, repr=False)

    def advance_to(self, sim_ms: float) -> None:
        if self.acceleration > 0 and sim_ms > self._last_sim_ms:
            time.sleep((sim_ms - self._last_sim_ms) / 1000.0 / self.acceleration)
        self._last_sim_ms = max(self._last_sim_ms, sim_ms)


class ServiceClient:
    """Thin wrapper over an httpx-compatible client (TestClient works too)."""

    def __init__(self, http, base_url: str = "", max_retries: int = 3,
                 retry_sleep_s: float = 0.2):
        self._http = http
        self._base = base_url.rstrip("/")
        self.max_retries = max_retries
        self.retry_sleep_s = retry_sleep_s

    def _url(self, path: str) -> str:
        return f"{self._base}{path}"

    def post_sample(self, window: RawWindow) -> dict | None:
        body = {"subject_id": window.subject_id,
                "start_time_ms": int(window.start_time_ms),
                "sample_rate_hz": window.sample_rate_hz,
                "ppg": window.ppg.tolist()}
        for attempt in range(self.max_retries):
            try:
                response = self._http.post(self._url("/api/v1/samples"), json=body)
            except Exception:
                if attempt == self.max_retries - 1:
                    return None
                time.sleep(self.retry_sleep_s)
                continue
            if response.status_code == 200:
                return response.json()
            return {"accepted": False, "status_code": response.status_code,
                    "detail": response.json().get("detail")}
        return None

    def get_pending(self, subject_id: str) -> list[dict]:
        response = self._http.get(self._url("/api/v1/ema/pending"),
                                  params={"subject": subject_id})
        if response.status_code != 200:
            return []
        return response.json()["prompts"]

    def post_response(self, prompt_id: str, stress_level: int, activity: str) -> dict:
        response = self._http.post(self._url("/api/v1/ema/response"),
                                   json={"prompt_id": prompt_id,
                                         "stress_level": int(stress_level),
                                         "activity": activity})
        payload = response.json()
        payload["status_code"] = response.status_code
        return payload


def _prompt_rng(seed: int, prompt_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{prompt_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


class AutoResponder:
    """Ground-truth EMA respondent: answers each prompt with probability
    ``adherence_prob`` after an exponential delay, flipping the level to a
    random other one with probability ``label_noise_prob``.
    """

    def __init__(self, profile: SubjectProfile, client: ServiceClient,
                 seed: int, sim_origin_ms: int):
        self.profile = profile
        self.client = client
        self.seed = seed
        self.sim_origin_ms = sim_origin_ms
        self._plans: dict[str, tuple[bool, float, int, str]] = {}
        self.submitted: list[dict] = []
        self.skipped = 0

    def _plan(self, prompt: dict) -> tuple[bool, float, int, str]:
        prompt_id = prompt["prompt_id"]
        if prompt_id not in self._plans:
            rng = _prompt_rng(self.seed, prompt_id)
            answer = bool(rng.random() < self.profile.adherence_prob)
            delay_ms = float(rng.exponential(
                self.profile.response_delay_mean_min * 60_000.0))
            sample_start = int(prompt["sample_id"].rsplit(":", 1)[1])
            level = self.profile.level_at(sample_start - self.sim_origin_ms)
            if rng.random() < self.profile.label_noise_prob:
                others = [l for l in range(5) if l != level]
                level = int(others[rng.integers(0, len(others))])
            activity = ACTIVITIES[int(rng.integers(0, len(ACTIVITIES)))]
            self._plans[prompt_id] = (answer, prompt["created_at_ms"] + delay_ms,
                                      level, activity)
        return self._plans[prompt_id]

    def step(self, now_ms: int) -> None:
        """Poll and answer every due prompt; called after each delivery."""
        for prompt in self.client.get_pending(self.profile.subject_id):
            answer, due_ms, level, activity = self._plan(prompt)
            if not answer:
                self.skipped += 1
                continue
            if now_ms >= due_ms:
                result = self.client.post_response(prompt["prompt_id"], level,
                                                   activity)
                if result.get("recorded"):
                    self.submitted.append(result)


@dataclass
class WindowOutcome:
    start_ms: int
    truth_level: int
    emitted_at_ms: int
    delivered_at_ms: int | None
    accepted: bool
    usable: bool
    prompted: bool
    extracted_bpm: float | None = None
    service_latency_ms: float | None = None


@dataclass
class SimulationReport:
    subject_id: str
    outcomes: list[WindowOutcome] = field(default_factory=list)
    responses_submitted: int = 0
    responses_skipped: int = 0
    delivery_failures: int = 0

    def to_csv(self) -> str:
        lines = ["window_start_ms,truth_level,emitted_at_ms,delivered_at_ms"]
        for o in self.outcomes:
            delivered = "" if o.delivered_at_ms is None else o.delivered_at_ms
            lines.append(f"{o.start_ms},{o.truth_level},{o.emitted_at_ms},{delivered}")
        return "\n".join(lines) + "\n"


def run_simulation(profile: SubjectProfile, duration_ms: int, client: ServiceClient,
                   seed: int, sim_origin_ms: int = 0,
                   clock: SimClock | None = None,
                   auto_respond: bool = True,
                   start_offset_ms: int = 0) -> SimulationReport:
    """Emit one window per 15 simulated minutes and (optionally) answer prompts.

    Deterministic for a fixed seed: per-window synthesis seeds derive from
    (seed, window index) and responder draws from (seed, prompt id) -- so a
    run resumed via ``start_offset_ms`` emits exactly what the uninterrupted
    run would have.
    """
    clock = clock or SimClock()
    report = SimulationReport(subject_id=profile.subject_id)
    responder = AutoResponder(profile, client, seed, sim_origin_ms) \
        if auto_respond else None
    buffered: list[tuple[RawWindow, WindowOutcome]] = []

    def deliver(window: RawWindow, outcome: WindowOutcome, now_ms: int) -> None:
        result = client.post_sample(window)
        outcome.delivered_at_ms = now_ms
        if result is None or not result.get("accepted"):
            outcome.accepted = False
            report.delivery_failures += 1
            return
        outcome.accepted = True
        outcome.usable = bool(result.get("usable"))
        outcome.prompted = result.get("prompt") is not None
        if result.get("elapsed_ms") is not None:
            outcome.service_latency_ms = float(result["elapsed_ms"])
        features = result.get("features")
        if features:
            outcome.extracted_bpm = float(features[0])

    n_windows = int(duration_ms // WINDOW_PERIOD_MS)
    first_index = int(start_offset_ms // WINDOW_PERIOD_MS)
    for index in range(first_index, n_windows):
        offset = index * WINDOW_PERIOD_MS
        clock.advance_to(offset)
        mode = profile.dropout_mode_at(offset)
        if mode == "off":
            continue
        level = profile.level_at(offset)
        hr = profile.baseline_hr + profile.hr_delta_bpm[level]
        jitter = (profile.baseline_rmssd_ms * profile.rmssd_scale[level]
                  / math.sqrt(2.0))
        window, _ = synthesize_ppg(
            hr, hrv_jitter_ms=jitter, noise_rms=profile.noise_rms,
            drift_amp=profile.drift_amp, duration_s=WINDOW_DURATION_S,
            seed=seed * 1_000_003 + index, subject_id=profile.subject_id,
            start_time_ms=sim_origin_ms + offset)
        outcome = WindowOutcome(start_ms=sim_origin_ms + offset, truth_level=level,
                                emitted_at_ms=sim_origin_ms + offset,
                                delivered_at_ms=None, accepted=False,
                                usable=False, prompted=False)
        report.outcomes.append(outcome)
        if mode == "buffer":
            buffered.append((window, outcome))
            continue
        # connectivity restored: flush the store-and-forward backlog first
        now = sim_origin_ms + offset
        for held_window, held_outcome in buffered:
            deliver(held_window, held_outcome, now)
        buffered.clear()
        deliver(window, outcome, now)
        if responder is not None:
            responder.step(now)

    end_ms = sim_origin_ms + n_windows * WINDOW_PERIOD_MS
    for held_window, held_outcome in buffered:
        deliver(held_window, held_outcome, end_ms)
    buffered.clear()
    if responder is not None:
        responder.step(end_ms)
        report.responses_submitted = len(responder.submitted)
        report.responses_skipped = responder.skipped
    return report


def make_cohort(n_subjects: int, seed: int, days: int = 30) -> list[SubjectProfile]:
    """Deterministic cohort with varied baselines, schedules and adherence.

    Baselines are spread over >= 20 bpm; subject 0 is flagged high-volume
    (fullest wear time, best adherence) to mirror heavy users.
    """
    if n_subjects < 1:
        raise ValueError("need at least one subject")
    rng = np.random.default_rng(seed)
    profiles = []
    for i in range(n_subjects):
        spread = 58.0 + 22.0 * (i / max(1, n_subjects - 1)) if n_subjects > 1 else 66.0
        baseline_hr = float(spread + rng.uniform(-1.0, 1.0))
        baseline_rmssd = float(rng.uniform(30.0, 60.0))
        schedule = [(0, 0)]
        for day in range(days):
            day_ms = day * 86_400_000
            for _ in range(int(rng.integers(1, 4))):
                start = day_ms + int(rng.uniform(8, 20) * 3_600_000)
                length = int(rng.uniform(30, 120) * 60_000)
                level = int(rng.integers(1, 5))
                schedule.append((start, level))
                schedule.append((start + length, 0))
        schedule.sort(key=lambda x: x[0])
        dropouts = []
        if i != 0:  # the high-volume subject wears the watch continuously
            for week in range(max(1, days // 7)):
                start = week * 7 * 86_400_000 + int(rng.uniform(0, 6.5 * 86_400_000))
                length = int(rng.uniform(1.0, 3.0) * 3_600_000)
                mode = "buffer" if rng.random() < 0.5 else "off"
                dropouts.append((start, start + length, mode))
        profiles.append(SubjectProfile(
            subject_id=f"sim{i:02d}",
            baseline_hr=baseline_hr,
            baseline_rmssd_ms=baseline_rmssd,
            stress_schedule=tuple(schedule),
            adherence_prob=0.9 if i == 0 else float(rng.uniform(0.55, 0.95)),
            response_delay_mean_min=float(rng.uniform(1.0, 5.0)),
            label_noise_prob=0.05,
            dropout_segments=tuple(dropouts),
            high_volume=(i == 0)))
    return profiles
