"""Per-subject label-query engine: decides which samples get an EMA prompt.

Two phases.  During the initial phase (the subject's first N samples) the
engine only observes, accumulating per-dimension normalization statistics;
no prompt is ever triggered.  At the N-th sample those statistics freeze,
every stored sample is placed in normalized feature space, and the query
phase begins: each new sample is queried with probability proportional to
the number of previously stored *unlabeled* samples within a fixed radius
of it (clamped below by p_min and above by 1), except that samples falling
in a saturated region (one that already holds enough labels) are never
queried.  Dense unexplored regions therefore get labeled quickly, sparse
regions keep a floor probability, and fully-labeled regions go silent.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (DuplicateLabelError, DuplicateSampleError, InvalidLabelError,
                     NeverQueriedError, ProtocolError, SnapshotFormatError,
                     UnknownSampleError)

STRESS_LEVELS = ("not at all", "a little bit", "some", "a lot", "extremely")
ACTIVITIES = ("sitting", "standing", "walking", "running", "lying", "other")

N_FEATURES = 13

_SNAPSHOT_MAGIC = b"SMQE"
_SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class QueryConfig:
    initial_count: int = 100          # N: samples observed before any query
    p_min: float = 0.1                # floor probability once querying starts
    density_divisor: float = 50.0     # C: neighbors needed for certainty
    neighborhood_radius: float = 1.0  # Euclidean radius in z-units
    region_cell_size: float = 1.0     # lattice cell side in z-units
    saturation_limit: int = 10        # labels per region before it goes silent
    rng_seed: int = 0

    def validate(self) -> None:
        if not (0.0 < self.p_min <= 1.0):
            raise ValueError(f"p_min must be in (0, 1], got {self.p_min}")
        if self.initial_count < 0:
            raise ValueError("initial_count must be >= 0")
        if self.density_divisor <= 0 or self.neighborhood_radius <= 0 \
                or self.region_cell_size <= 0:
            raise ValueError("density_divisor, radius and cell size must be positive")
        if self.saturation_limit < 1:
            raise ValueError("saturation_limit must be >= 1")


def region_of(normalized, cell_size: float) -> tuple[int, ...]:
    """Lattice cell of a normalized feature vector: floor(x / g) per axis."""
    z = np.asarray(normalized, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("normalized vector must be finite")
    return tuple(int(v) for v in np.floor(z / cell_size))


def format_region(region: tuple[int, ...] | None) -> str:
    return "" if region is None else "|".join(str(c) for c in region)


@dataclass
class RegionState:
    unlabeled_count: int = 0
    labeled_count: int = 0

    @property
    def saturated(self) -> bool:
        return self.labeled_count >= self._limit

    _limit: int = 10


@dataclass
class SampleRecord:
    sample_id: str
    subject_id: str
    timestamp_ms: int
    features: np.ndarray
    normalized: np.ndarray | None = None
    label: int | None = None
    activity: str | None = None
    queried: bool = False
    region: tuple[int, ...] | None = None


@dataclass(frozen=True)
class QueryDecision:
    sample_id: str
    phase: str                 # "initial" or "query"
    trigger: bool
    probability: float
    neighbor_count: int
    region: tuple[int, ...] | None

    def audit_row(self) -> str:
        return (f"{self.sample_id},{self.neighbor_count},{self.probability:.6g},"
                f"{int(self.trigger)},{format_region(self.region)}")


AUDIT_CSV_HEADER = "sample_id,n,probability,trigger,region_id"


class QueryEngine:
    """Single-subject engine; callers must serialize writes per subject."""

    def __init__(self, config: QueryConfig = QueryConfig()):
        config.validate()
        self.config = config
        self._rng = np.random.default_rng(config.rng_seed)
        self._records: dict[str, SampleRecord] = {}
        self._order: list[str] = []
        self._frozen = config.initial_count == 0
        self._mean = np.zeros(N_FEATURES)
        self._std = np.ones(N_FEATURES)
        self._regions: dict[tuple[int, ...], RegionState] = {}
        # Growing buffers over stored, normalized samples (query-phase geometry).
        self._z = np.zeros((0, N_FEATURES))
        self._unlabeled = np.zeros(0, dtype=bool)

    # -- phase bookkeeping ------------------------------------------------

    @property
    def sample_count(self) -> int:
        return len(self._order)

    @property
    def initial_phase_done(self) -> bool:
        return self._frozen

    def _region_state(self, region: tuple[int, ...]) -> RegionState:
        state = self._regions.get(region)
        if state is None:
            state = RegionState(_limit=self.config.saturation_limit)
            self._regions[region] = state
        return state

    def _freeze_normalizer(self) -> None:
        rows = np.array([self._records[sid].features for sid in self._order]) \
            if self._order else np.zeros((0, N_FEATURES))
        if len(rows):
            self._mean = rows.mean(axis=0)
            std = rows.std(axis=0)
            std[std == 0.0] = 1.0       # constant dimensions stay unscaled
            self._std = std
        self._frozen = True
        for sid in self._order:
            self._place(self._records[sid])

    def _place(self, record: SampleRecord) -> None:
        record.normalized = (record.features - self._mean) / self._std
        record.region = region_of(record.normalized, self.config.region_cell_size)
        self._z = np.vstack([self._z, record.normalized[None, :]]) \
            if len(self._z) else record.normalized[None, :].copy()
        self._unlabeled = np.append(self._unlabeled, record.label is None)
        state = self._region_state(record.region)
        if record.label is None:
            state.unlabeled_count += 1
        else:
            state.labeled_count += 1

    def _check_new(self, record: SampleRecord) -> None:
        if record.sample_id in self._records:
            raise DuplicateSampleError(f"sample {record.sample_id!r} already stored")
        features = np.asarray(record.features, dtype=float)
        if features.shape != (N_FEATURES,) or not np.all(np.isfinite(features)):
            raise ValueError(f"features must be a finite {N_FEATURES}-vector")
        record.features = features

    # -- the two phase-specific operations ---------------------------------

    def observe(self, record: SampleRecord) -> QueryDecision:
        """Initial-phase storage; never triggers.  Freezes stats at sample N."""
        if self._frozen:
            raise ProtocolError("initial phase already complete; use decide_query")
        self._check_new(record)
        self._records[record.sample_id] = record
        self._order.append(record.sample_id)
        if self.sample_count >= self.config.initial_count:
            self._freeze_normalizer()
        return QueryDecision(sample_id=record.sample_id, phase="initial",
                             trigger=False, probability=0.0, neighbor_count=0,
                             region=record.region)

    def decide_query(self, record: SampleRecord) -> QueryDecision:
        """Query-phase decision; the record is stored either way."""
        if not self._frozen:
            raise ProtocolError(
                f"initial phase incomplete ({self.sample_count}/"
                f"{self.config.initial_count} samples); use observe")
        self._check_new(record)
        z = (record.features - self._mean) / self._std
        region = region_of(z, self.config.region_cell_size)

        radius = self.config.neighborhood_radius
        if len(self._z):
            dist2 = np.sum((self._z - z) ** 2, axis=1)
            neighbor_count = int(np.count_nonzero(
                self._unlabeled & (dist2 <= radius * radius)))
        else:
            neighbor_count = 0

        if self._region_state(region).saturated:
            probability, trigger = 0.0, False   # saturation overrides the p_min floor
        else:
            probability = min(max(neighbor_count / self.config.density_divisor,
                                  self.config.p_min), 1.0)
            trigger = bool(self._rng.random() < probability)

        record.queried = trigger
        self._records[record.sample_id] = record
        self._order.append(record.sample_id)
        self._place(record)
        return QueryDecision(sample_id=record.sample_id, phase="query",
                             trigger=trigger, probability=probability,
                             neighbor_count=neighbor_count, region=region)

    def ingest(self, record: SampleRecord) -> QueryDecision:
        """Phase-dispatching convenience used by the service layer."""
        if not self._frozen:
            return self.observe(record)
        return self.decide_query(record)

    def record_label(self, sample_id: str, label: int, activity: str) -> None:
        record = self._records.get(sample_id)
        if record is None:
            raise UnknownSampleError(f"no sample {sample_id!r}")
        if not record.queried:
            raise NeverQueriedError(f"sample {sample_id!r} was never queried")
        if record.label is not None:
            raise DuplicateLabelError(f"sample {sample_id!r} already labeled")
        if not isinstance(label, (int, np.integer)) or not 0 <= int(label) < len(STRESS_LEVELS):
            raise InvalidLabelError(f"stress level must be 0..4, got {label!r}")
        if activity not in ACTIVITIES:
            raise InvalidLabelError(f"unknown activity {activity!r}")
        record.label = int(label)
        record.activity = activity
        pos = self._order.index(sample_id)
        self._unlabeled[pos] = False
        state = self._region_state(record.region)
        state.unlabeled_count -= 1
        state.labeled_count += 1

    # -- introspection ------------------------------------------------------

    def records(self) -> list[SampleRecord]:
        return [self._records[sid] for sid in self._order]

    def region_summary(self) -> dict:
        saturated = sum(1 for s in self._regions.values() if s.saturated)
        return {"regions": len(self._regions), "saturated": saturated,
                "labels": sum(s.labeled_count for s in self._regions.values())}

    # -- persistence ----------------------------------------------------------

    def snapshot(self) -> bytes:
        """Versioned, length-prefixed frame log (see docs/snapshot-format.md)."""
        frames = [json.dumps({
            "config": self.config.__dict__,
            "frozen": self._frozen,
            "mean": self._mean.tolist(),
            "std": self._std.tolist(),
            "rng_state": _rng_state_to_json(self._rng),
            "n_records": len(self._order),
        }).encode()]
        for sid in self._order:
            r = self._records[sid]
            frames.append(json.dumps({
                "sample_id": r.sample_id, "subject_id": r.subject_id,
                "timestamp_ms": r.timestamp_ms, "features": r.features.tolist(),
                "label": r.label, "activity": r.activity, "queried": r.queried,
            }).encode())
        out = bytearray(_SNAPSHOT_MAGIC)
        out += struct.pack(">H", _SNAPSHOT_VERSION)
        for frame in frames:
            out += struct.pack(">I", len(frame))
            out += frame
        return bytes(out)

    @classmethod
    def restore(cls, blob: bytes) -> "QueryEngine":
        if len(blob) < 6 or blob[:4] != _SNAPSHOT_MAGIC:
            raise SnapshotFormatError("not an engine snapshot")
        (version,) = struct.unpack(">H", blob[4:6])
        if version > _SNAPSHOT_VERSION:
            raise SnapshotFormatError(
                f"snapshot version {version} is newer than supported "
                f"({_SNAPSHOT_VERSION})")
        frames = []
        pos = 6
        while pos < len(blob):
            if pos + 4 > len(blob):
                raise SnapshotFormatError("truncated frame header")
            (length,) = struct.unpack(">I", blob[pos:pos + 4])
            pos += 4
            if pos + length > len(blob):
                raise SnapshotFormatError("truncated frame body")
            try:
                frames.append(json.loads(blob[pos:pos + length]))
            except json.JSONDecodeError as exc:
                raise SnapshotFormatError(f"corrupt frame: {exc}") from exc
            pos += length
        if not frames:
            raise SnapshotFormatError("snapshot has no header frame")
        header, records = frames[0], frames[1:]
        if header.get("n_records") != len(records):
            raise SnapshotFormatError("record count mismatch")

        engine = cls(QueryConfig(**header["config"]))
        engine._frozen = False
        for rec in records:
            record = SampleRecord(
                sample_id=rec["sample_id"], subject_id=rec["subject_id"],
                timestamp_ms=rec["timestamp_ms"],
                features=np.array(rec["features"], dtype=float),
                label=rec["label"], activity=rec["activity"],
                queried=rec["queried"])
            engine._records[record.sample_id] = record
            engine._order.append(record.sample_id)
        engine._mean = np.array(header["mean"], dtype=float)
        engine._std = np.array(header["std"], dtype=float)
        engine._frozen = bool(header["frozen"])
        if engine._frozen:
            for sid in engine._order:
                engine._place(engine._records[sid])
        _rng_state_from_json(engine._rng, header["rng_state"])
        return engine


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {"bit_generator": state["bit_generator"],
            "state": {k: int(v) for k, v in state["state"].items()},
            "has_uint32": int(state["has_uint32"]),
            "uinteger": int(state["uinteger"])}


def _rng_state_from_json(rng: np.random.Generator, payload: dict) -> None:
    try:
        rng.bit_generator.state = {
            "bit_generator": payload["bit_generator"],
            "state": {k: int(v) for k, v in payload["state"].items()},
            "has_uint32": int(payload["has_uint32"]),
            "uinteger": int(payload["uinteger"]),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotFormatError(f"bad rng state: {exc}") from exc
