"""Cloud-layer core: ingest windows, drive the query engine, manage EMA
prompts and label intake, persist everything, export datasets.

Persistence is an append-only JSONL event log per subject plus periodic
engine snapshots; replaying the log from the last snapshot reproduces the
in-memory state exactly (the engine re-executes each logged decision, which
restores its RNG position bit-for-bit).  Raw PPG lives in one CSV file per
window next to the log.

Time: the service runs on *stream time* -- the maximum start_time seen per
subject.  Prompt expiry is therefore a pure function of the ingested stream,
which keeps recovery and accelerated simulation deterministic.  Late
(store-and-forward) windows never move time backwards; their prompts are
born in the past and expire on the next fresh window.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (DuplicateResponseError, ExpiredPromptError, InsufficientBeatsError,
                     InsufficientDataError, SnapshotFormatError, StressmonError,
                     UnknownPromptError, UnknownSubjectError)
from .hrv import FeatureVector
from .pipeline import PipelineConfig, WindowPipeline
from .query import (AUDIT_CSV_HEADER, QueryConfig, QueryDecision, QueryEngine,
                    SampleRecord, format_region)
from .windows import RawWindow, write_window_csv

PROMPT_EXPIRY_MIN_DEFAULT = 15.0


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: str = "./data"
    listen_host: str = "127.0.0.1"
    listen_port: int = 8430
    window_duration_s: float = 120.0
    prompt_expiry_min: float = PROMPT_EXPIRY_MIN_DEFAULT
    snapshot_every_events: int = 500
    fsync: bool = True
    query: QueryConfig = field(default_factory=QueryConfig)

    @property
    def prompt_expiry_ms(self) -> float:
        return self.prompt_expiry_min * 60_000.0


_ENV_KEYS = {
    "STRESSMON_DATA_DIR": ("data_dir", str),
    "STRESSMON_LISTEN_HOST": ("listen_host", str),
    "STRESSMON_LISTEN_PORT": ("listen_port", int),
    "STRESSMON_WINDOW_DURATION_S": ("window_duration_s", float),
    "STRESSMON_PROMPT_EXPIRY_MIN": ("prompt_expiry_min", float),
    "STRESSMON_SNAPSHOT_EVERY": ("snapshot_every_events", int),
    "STRESSMON_FSYNC": ("fsync", lambda v: v.lower() in ("1", "true", "yes")),
}

_ENV_QUERY_KEYS = {
    "STRESSMON_QUERY_INITIAL_COUNT": ("initial_count", int),
    "STRESSMON_QUERY_P_MIN": ("p_min", float),
    "STRESSMON_QUERY_DENSITY_DIVISOR": ("density_divisor", float),
    "STRESSMON_QUERY_RADIUS": ("neighborhood_radius", float),
    "STRESSMON_QUERY_CELL_SIZE": ("region_cell_size", float),
    "STRESSMON_QUERY_SATURATION": ("saturation_limit", int),
    "STRESSMON_QUERY_SEED": ("rng_seed", int),
}


def load_config(path=None, env=None) -> ServiceConfig:
    """JSON config file, then environment overrides (STRESSMON_*)."""
    env = os.environ if env is None else env
    file_cfg: dict = {}
    if path is not None:
        file_cfg = json.loads(Path(path).read_text())
    query_cfg = dict(file_cfg.pop("query", {}))
    kwargs = dict(file_cfg)
    for var, (key, cast) in _ENV_KEYS.items():
        if var in env:
            kwargs[key] = cast(env[var])
    for var, (key, cast) in _ENV_QUERY_KEYS.items():
        if var in env:
            query_cfg[key] = cast(env[var])
    return ServiceConfig(query=QueryConfig(**query_cfg), **kwargs)


@dataclass
class Prompt:
    prompt_id: str
    subject_id: str
    sample_id: str
    created_at_ms: int
    expires_at_ms: int
    answered: bool = False
    responded_at_ms: int | None = None

    def expired(self, now_ms: int) -> bool:
        return not self.answered and now_ms > self.expires_at_ms

    def to_json(self) -> dict:
        return {"prompt_id": self.prompt_id, "subject_id": self.subject_id,
                "sample_id": self.sample_id, "created_at_ms": self.created_at_ms,
                "expires_at_ms": self.expires_at_ms}


@dataclass
class WindowInfo:
    sample_id: str
    start_time_ms: int
    usable: bool
    features: FeatureVector | None
    unusable_reason: str | None = None


@dataclass
class IngestResult:
    sample_id: str
    accepted: bool
    duplicate: bool
    usable: bool
    features: FeatureVector | None
    decision: QueryDecision | None
    prompt: Prompt | None
    elapsed_ms: float = 0.0


class _SubjectState:
    def __init__(self, subject_id: str, directory: Path, config: ServiceConfig):
        self.subject_id = subject_id
        self.directory = directory
        self.config = config
        self.engine = QueryEngine(config.query)
        self.windows: dict[int, WindowInfo] = {}
        self.prompts: dict[str, Prompt] = {}
        self.stream_time_ms = 0
        self.seq = 0
        self.snapshot_seq = 0
        self.lock = threading.RLock()
        self._log_handle = None

    # -- filesystem helpers -------------------------------------------------

    @property
    def events_path(self) -> Path:
        return self.directory / "events.jsonl"

    @property
    def windows_dir(self) -> Path:
        return self.directory / "windows"

    @property
    def snapshots_dir(self) -> Path:
        return self.directory / "snapshots"

    @property
    def audit_path(self) -> Path:
        return self.directory / "decisions.csv"

    def open_log(self):
        if self._log_handle is None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._log_handle = open(self.events_path, "a", encoding="utf-8")
        return self._log_handle

    def append_event(self, event: dict) -> None:
        self.seq += 1
        event = {"seq": self.seq, **event}
        handle = self.open_log()
        handle.write(json.dumps(event) + "\n")
        handle.flush()
        if self.config.fsync:
            os.fsync(handle.fileno())

    def append_audit(self, decision: QueryDecision) -> None:
        new = not self.audit_path.exists()
        with open(self.audit_path, "a", encoding="utf-8") as fh:
            if new:
                fh.write(AUDIT_CSV_HEADER + "\n")
            fh.write(decision.audit_row() + "\n")

    def maybe_snapshot(self) -> None:
        if self.seq - self.snapshot_seq < self.config.snapshot_every_events:
            return
        self.snapshots_dir.mkdir(parents=True, exist_ok=True)
        blob = self.engine.snapshot()
        target = self.snapshots_dir / f"engine-{self.seq:09d}.bin"
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(blob)
        tmp.rename(target)
        self.snapshot_seq = self.seq

    def close(self):
        if self._log_handle is not None:
            self._log_handle.close()
            self._log_handle = None


class ServiceCore:
    """Single-process service state machine behind the HTTP API."""

    def __init__(self, config: ServiceConfig = ServiceConfig(),
                 pipeline_config: PipelineConfig = PipelineConfig()):
        self.config = config
        self.pipeline = WindowPipeline(pipeline_config)
        self.data_dir = Path(config.data_dir)
        self._subjects: dict[str, _SubjectState] = {}
        self._prompt_index: dict[str, str] = {}
        self._registry_lock = threading.RLock()
        self.recover()

    # -- subject bookkeeping -------------------------------------------------

    def _subject(self, subject_id: str, create: bool = False) -> _SubjectState:
        with self._registry_lock:
            state = self._subjects.get(subject_id)
            if state is None:
                if not create:
                    raise UnknownSubjectError(f"unknown subject {subject_id!r}")
                state = _SubjectState(subject_id,
                                      self.data_dir / "subjects" / subject_id,
                                      self.config)
                self._subjects[subject_id] = state
            return state

    def subjects(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._subjects)

    # -- ingestion -------------------------------------------------------------

    def ingest(self, window: RawWindow) -> IngestResult:
        started = time.perf_counter()
        window.validate(expected_duration_s=self.config.window_duration_s,
                        max_filter_cut_hz=self.pipeline.config.filter_spec.high_cut_hz)
        state = self._subject(window.subject_id, create=True)
        with state.lock:
            start_ms = int(window.start_time_ms)
            sample_id = f"{window.subject_id}:{start_ms}"
            existing = state.windows.get(start_ms)
            if existing is not None:
                return IngestResult(sample_id=existing.sample_id, accepted=True,
                                    duplicate=True, usable=existing.usable,
                                    features=existing.features, decision=None,
                                    prompt=None)

            features = None
            unusable_reason = None
            try:
                features = self.pipeline.features(window)
            except (InsufficientBeatsError, InsufficientDataError) as exc:
                unusable_reason = str(exc)
            usable = features is not None

            state.windows_dir.mkdir(parents=True, exist_ok=True)
            write_window_csv(window, state.windows_dir / f"{start_ms}.csv")

            state.stream_time_ms = max(state.stream_time_ms, start_ms)
            decision = None
            prompt = None
            if usable:
                record = SampleRecord(sample_id=sample_id,
                                      subject_id=window.subject_id,
                                      timestamp_ms=start_ms,
                                      features=features.as_array())
                decision = state.engine.ingest(record)
                if decision.trigger:
                    prompt = Prompt(
                        prompt_id=f"p:{sample_id}",
                        subject_id=window.subject_id,
                        sample_id=sample_id,
                        created_at_ms=start_ms,
                        expires_at_ms=int(start_ms + self.config.prompt_expiry_ms))
                    state.prompts[prompt.prompt_id] = prompt
                    with self._registry_lock:
                        self._prompt_index[prompt.prompt_id] = window.subject_id

            info = WindowInfo(sample_id=sample_id, start_time_ms=start_ms,
                              usable=usable, features=features,
                              unusable_reason=unusable_reason)
            state.windows[start_ms] = info

            event = {"t": "window", "subject": window.subject_id,
                     "start_ms": start_ms,
                     "rate_hz": window.sample_rate_hz,
                     "usable": usable,
                     "features": features.as_array().tolist() if usable else None,
                     "flags": sorted(features.flags) if usable else [],
                     "unusable_reason": unusable_reason,
                     "decision": None if decision is None else {
                         "phase": decision.phase, "trigger": decision.trigger,
                         "probability": decision.probability,
                         "neighbor_count": decision.neighbor_count,
                         "region": format_region(decision.region)},
                     "prompt": prompt.to_json() if prompt else None}
            state.append_event(event)
            if decision is not None:
                state.append_audit(decision)
            state.maybe_snapshot()
            elapsed_ms = (time.perf_counter() - started) * 1000.0
            return IngestResult(sample_id=sample_id, accepted=True, duplicate=False,
                                usable=usable, features=features, decision=decision,
                                prompt=prompt, elapsed_ms=elapsed_ms)

    # -- prompts and responses ---------------------------------------------------

    def get_pending(self, subject_id: str) -> list[Prompt]:
        state = self._subject(subject_id)
        with state.lock:
            now = state.stream_time_ms
            open_prompts = [p for p in state.prompts.values()
                            if not p.answered and not p.expired(now)]
            return sorted(open_prompts, key=lambda p: p.created_at_ms)

    def submit_response(self, prompt_id: str, stress_level: int,
                        activity: str) -> Prompt:
        with self._registry_lock:
            subject_id = self._prompt_index.get(prompt_id)
        if subject_id is None:
            raise UnknownPromptError(f"unknown prompt {prompt_id!r}")
        state = self._subject(subject_id)
        with state.lock:
            prompt = state.prompts[prompt_id]
            if prompt.answered:
                raise DuplicateResponseError(f"prompt {prompt_id!r} already answered")
            now = state.stream_time_ms
            if prompt.expired(now):
                raise ExpiredPromptError(
                    f"prompt {prompt_id!r} expired at {prompt.expires_at_ms}")
            state.engine.record_label(prompt.sample_id, stress_level, activity)
            prompt.answered = True
            prompt.responded_at_ms = now
            state.append_event({"t": "response", "subject": subject_id,
                                "prompt_id": prompt_id,
                                "sample_id": prompt.sample_id,
                                "stress_level": int(stress_level),
                                "activity": activity,
                                "responded_at_ms": now})
            state.maybe_snapshot()
            return prompt

    # -- exports and stats ----------------------------------------------------------

    def export_csv(self, kind: str, subject_id: str | None = None) -> str:
        from .evaluation import LABELED_CSV_HEADER, labeled_csv_row
        from .hrv import FEATURE_CSV_HEADER, feature_csv_row

        if kind not in ("labeled", "unlabeled"):
            raise ValueError(f"kind must be labeled|unlabeled, got {kind!r}")
        subjects = [subject_id] if subject_id else self.subjects()
        lines = [LABELED_CSV_HEADER if kind == "labeled" else FEATURE_CSV_HEADER]
        for sid in subjects:
            state = self._subject(sid)
            with state.lock:
                answered = {state.prompts[pid].sample_id: state.prompts[pid]
                            for pid in state.prompts if state.prompts[pid].answered}
                labels = {r.sample_id: r for r in state.engine.records()
                          if r.label is not None}
                for start_ms in sorted(state.windows):
                    info = state.windows[start_ms]
                    if not info.usable:
                        continue
                    if kind == "labeled" and info.sample_id in answered:
                        rec = labels[info.sample_id]
                        lines.append(labeled_csv_row(sid, start_ms, info.features,
                                                     rec.label, rec.activity))
                    elif kind == "unlabeled" and info.sample_id not in answered:
                        lines.append(feature_csv_row(sid, start_ms, info.features))
        return "\n".join(lines) + "\n"

    def stats(self, subject_id: str | None = None) -> dict:
        subjects = [subject_id] if subject_id else self.subjects()
        out = {}
        for sid in subjects:
            state = self._subject(sid)
            with state.lock:
                now = state.stream_time_ms
                prompts = list(state.prompts.values())
                answered = [p for p in prompts if p.answered]
                expired = [p for p in prompts if p.expired(now)]
                pending = [p for p in prompts if not p.answered and not p.expired(now)]
                per_day: dict[str, int] = {}
                for p in answered:
                    day = time.strftime("%Y-%m-%d",
                                        time.gmtime(p.responded_at_ms / 1000.0))
                    per_day[day] = per_day.get(day, 0) + 1
                out[sid] = {
                    "windows": len(state.windows),
                    "usable": sum(1 for w in state.windows.values() if w.usable),
                    "unusable": sum(1 for w in state.windows.values() if not w.usable),
                    "stream_time_ms": now,
                    "initial_phase_done": state.engine.initial_phase_done,
                    "engine_samples": state.engine.sample_count,
                    "prompts": len(prompts),
                    "answered": len(answered),
                    "expired": len(expired),
                    "pending": len(pending),
                    "labels_per_day": [
                        {"day": d, "count": per_day[d]} for d in sorted(per_day)],
                    "regions": state.engine.region_summary(),
                }
        return {"subjects": out}

    # -- recovery --------------------------------------------------------------------

    def recover(self) -> None:
        """Rebuild all subject state from snapshots plus event-log replay."""
        subjects_dir = self.data_dir / "subjects"
        if not subjects_dir.is_dir():
            return
        for subject_dir in sorted(subjects_dir.iterdir()):
            if not subject_dir.is_dir():
                continue
            self._recover_subject(subject_dir.name, subject_dir)

    def _recover_subject(self, subject_id: str, directory: Path) -> None:
        state = _SubjectState(subject_id, directory, self.config)

        snapshot_seq = 0
        snapshots = sorted(state.snapshots_dir.glob("engine-*.bin")) \
            if state.snapshots_dir.is_dir() else []
        if snapshots:
            latest = snapshots[-1]
            try:
                state.engine = QueryEngine.restore(latest.read_bytes())
                snapshot_seq = int(latest.stem.split("-")[1])
            except (SnapshotFormatError, ValueError, IndexError):
                state.engine = QueryEngine(self.config.query)
                snapshot_seq = 0

        events = self._read_events(state)
        # Snapshot wins over a log that lost its tail.
        replay = [e for e in events if e["seq"] > snapshot_seq]
        last_seq = events[-1]["seq"] if events else 0
        state.seq = max(last_seq, snapshot_seq)
        state.snapshot_seq = snapshot_seq

        engine_records: dict[str, SampleRecord] = {
            r.sample_id: r for r in state.engine.records()}

        # Pass 1 (all events): service-level bookkeeping -- windows, prompts,
        # answered flags, stream time.
        for event in events:
            if event["t"] == "window":
                start_ms = int(event["start_ms"])
                usable = bool(event["usable"])
                features = None
                if usable:
                    features = FeatureVector.from_array(
                        event["features"], flags=frozenset(event.get("flags", [])))
                state.windows[start_ms] = WindowInfo(
                    sample_id=f"{subject_id}:{start_ms}", start_time_ms=start_ms,
                    usable=usable, features=features,
                    unusable_reason=event.get("unusable_reason"))
                state.stream_time_ms = max(state.stream_time_ms, start_ms)
                prompt_json = event.get("prompt")
                if prompt_json:
                    prompt = Prompt(**prompt_json)
                    state.prompts[prompt.prompt_id] = prompt
                    self._prompt_index[prompt.prompt_id] = subject_id
            elif event["t"] == "response":
                prompt = state.prompts.get(event["prompt_id"])
                if prompt is not None:
                    prompt.answered = True
                    prompt.responded_at_ms = int(event["responded_at_ms"])

        # Pass 2 (events past the snapshot): re-execute engine operations in
        # order, which restores the engine -- including its RNG position --
        # exactly as an uninterrupted run would have left it.
        for event in replay:
            if event["t"] == "window" and event["usable"]:
                sample_id = f"{subject_id}:{int(event['start_ms'])}"
                if sample_id in engine_records:
                    continue
                record = SampleRecord(
                    sample_id=sample_id, subject_id=subject_id,
                    timestamp_ms=int(event["start_ms"]),
                    features=np.array(event["features"], dtype=float))
                decision = state.engine.ingest(record)
                logged = event.get("decision") or {}
                if logged and bool(decision.trigger) != bool(logged.get("trigger")):
                    raise StressmonError(
                        f"replay diverged for {sample_id}: log says trigger="
                        f"{logged.get('trigger')}, engine said {decision.trigger}")
            elif event["t"] == "response":
                state.engine.record_label(event["sample_id"],
                                          int(event["stress_level"]),
                                          event["activity"])

        # A snapshot newer than the log tail wins: backfill window entries for
        # engine records whose events were lost (flags are gone, features kept).
        for sample_id, record in engine_records.items():
            start_ms = int(record.timestamp_ms)
            if start_ms not in state.windows:
                state.windows[start_ms] = WindowInfo(
                    sample_id=sample_id, start_time_ms=start_ms, usable=True,
                    features=FeatureVector.from_array(record.features))
                state.stream_time_ms = max(state.stream_time_ms, start_ms)

        with self._registry_lock:
            self._subjects[subject_id] = state

    @staticmethod
    def _read_events(state: _SubjectState) -> list[dict]:
        """Read the event log; a corrupt tail is truncated with a warning."""
        if not state.events_path.exists():
            return []
        events = []
        good_bytes = 0
        with open(state.events_path, "rb") as fh:
            for raw in fh:
                try:
                    event = json.loads(raw.decode("utf-8"))
                    if "seq" not in event or "t" not in event:
                        raise ValueError("missing seq/t")
                except (ValueError, UnicodeDecodeError):
                    import warnings
                    warnings.warn(
                        f"{state.events_path}: corrupt record after byte "
                        f"{good_bytes}; truncating tail")
                    with open(state.events_path, "ab") as trunc:
                        trunc.truncate(good_bytes)
                    break
                events.append(event)
                good_bytes += len(raw)
        return events

    def close(self) -> None:
        with self._registry_lock:
            for state in self._subjects.values():
                state.close()
