"""Raw PPG capture windows and their on-disk CSV format.

A window file holds one or more capture blocks.  Each block starts with a
``#meta`` sidecar line carrying the window metadata, followed by a
``t_ms,ppg[,ax,ay,az]`` header and one row per sample::

    #meta subject=s01 start_time_ms=1700000000000 sample_rate_hz=20
    t_ms,ppg
    0,7.981
    50,8.112
    ...
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidWindowError

DEFAULT_SAMPLE_RATE_HZ = 20.0
DEFAULT_DURATION_S = 120.0


@dataclass
class RawWindow:
    """One fixed-duration PPG capture from one subject.

    ``motion`` rows (3-axis accelerometer) are carried through storage but
    never processed by the pipeline.
    """

    subject_id: str
    start_time_ms: int
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    ppg: np.ndarray = field(default_factory=lambda: np.zeros(0))
    motion: np.ndarray | None = None

    def __post_init__(self):
        self.ppg = np.asarray(self.ppg, dtype=float)
        if self.motion is not None:
            self.motion = np.asarray(self.motion, dtype=float)

    @property
    def duration_s(self) -> float:
        return len(self.ppg) / self.sample_rate_hz

    def validate(self, expected_duration_s: float | None = DEFAULT_DURATION_S,
                 max_filter_cut_hz: float = 3.5) -> None:
        """Raise InvalidWindowError unless the window is processable."""
        if not self.subject_id:
            raise InvalidWindowError("missing subject_id")
        if self.sample_rate_hz <= 0:
            raise InvalidWindowError("sample_rate_hz must be positive")
        if self.sample_rate_hz <= 2.0 * max_filter_cut_hz:
            raise InvalidWindowError(
                f"sample rate {self.sample_rate_hz} Hz cannot carry content up to "
                f"{max_filter_cut_hz} Hz")
        if self.ppg.ndim != 1:
            raise InvalidWindowError("ppg must be a flat sequence")
        if not np.all(np.isfinite(self.ppg)):
            raise InvalidWindowError("ppg contains non-finite readings")
        if expected_duration_s is not None:
            expected = round(expected_duration_s * self.sample_rate_hz)
            if len(self.ppg) != expected:
                raise InvalidWindowError(
                    f"expected {expected} samples for a {expected_duration_s:g} s window "
                    f"at {self.sample_rate_hz:g} Hz, got {len(self.ppg)}")
        if self.motion is not None and (self.motion.ndim != 2 or self.motion.shape[1] != 3
                                        or len(self.motion) != len(self.ppg)):
            raise InvalidWindowError("motion must be one 3-axis triple per ppg sample")


def _format_meta(window: RawWindow) -> str:
    return (f"#meta subject={window.subject_id} "
            f"start_time_ms={window.start_time_ms} "
            f"sample_rate_hz={window.sample_rate_hz:g}")


def write_window_csv(window: RawWindow, target) -> None:
    """Append one window block to ``target`` (path or text file object)."""
    if isinstance(target, (str, Path)):
        with open(target, "a", encoding="utf-8") as fh:
            write_window_csv(window, fh)
        return
    out = target
    out.write(_format_meta(window) + "\n")
    has_motion = window.motion is not None
    out.write("t_ms,ppg,ax,ay,az\n" if has_motion else "t_ms,ppg\n")
    step = 1000.0 / window.sample_rate_hz
    for i, v in enumerate(window.ppg):
        t = int(round(i * step))
        if has_motion:
            ax, ay, az = window.motion[i]
            out.write(f"{t},{v:.10g},{ax:.10g},{ay:.10g},{az:.10g}\n")
        else:
            out.write(f"{t},{v:.10g}\n")


def _parse_meta(line: str) -> dict:
    fields = {}
    for token in line[len("#meta"):].split():
        if "=" not in token:
            raise InvalidWindowError(f"malformed #meta token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    try:
        return {
            "subject_id": fields["subject"],
            "start_time_ms": int(fields["start_time_ms"]),
            "sample_rate_hz": float(fields["sample_rate_hz"]),
        }
    except KeyError as exc:
        raise InvalidWindowError(f"#meta missing field {exc}") from exc


def read_windows_csv(source) -> list[RawWindow]:
    """Read every window block from a file path or text file object."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_windows_csv(fh)

    windows: list[RawWindow] = []
    meta = None
    ppg: list[float] = []
    motion: list[list[float]] = []
    has_motion = False

    def flush():
        nonlocal meta, ppg, motion
        if meta is None:
            return
        if not ppg:
            raise InvalidWindowError("window block has no samples")
        windows.append(RawWindow(
            subject_id=meta["subject_id"],
            start_time_ms=meta["start_time_ms"],
            sample_rate_hz=meta["sample_rate_hz"],
            ppg=np.array(ppg),
            motion=np.array(motion) if motion else None,
        ))
        meta, ppg, motion = None, [], []

    for raw_line in source:
        line = raw_line.strip()
        if not line:
            continue
        if line.startswith("#meta"):
            flush()
            meta = _parse_meta(line)
            continue
        if line.startswith("t_ms"):
            has_motion = line.count(",") >= 4
            continue
        if meta is None:
            raise InvalidWindowError("sample row before any #meta line")
        parts = line.split(",")
        ppg.append(float(parts[1]))
        if has_motion and len(parts) >= 5:
            motion.append([float(parts[2]), float(parts[3]), float(parts[4])])
    flush()
    return windows


def read_windows_path(path) -> list[RawWindow]:
    """Read windows from a CSV file or from every ``*.csv`` in a directory."""
    p = Path(path)
    if p.is_dir():
        out = []
        for child in sorted(p.glob("*.csv")):
            out.extend(read_windows_csv(child))
        return out
    return read_windows_csv(p)
