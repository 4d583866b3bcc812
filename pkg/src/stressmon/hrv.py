"""Heart-rate and heart-rate-variability features from detected beats.

Thirteen features per window: BPM, IBI, SDNN, SDSD, RMSSD, pNN20, pNN50,
MAD, SD1, SD2, S, SD1/SD2 and BR.  Standard deviations use the population
(1/N) form throughout, which keeps the Poincare identities
SD1 = sqrt(var(d)/2) and SD1^2 + SD2^2 = 2*SDNN^2 exact.

The breathing-rate estimate is not a standard reading of the other twelve:
it resamples the NN tachogram onto a uniform 4 Hz grid with a cubic spline,
applies a Hann window and takes the spectral argmax within 0.1-0.4 Hz.
Every exported vector carries a ``br_spectral`` flag so downstream users
know BR comes from this estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .dsp import PeakList
from .errors import InsufficientBeatsError, InsufficientDataError

NN_MIN_MS = 60000.0 / 210.0   # 285.714... ms
NN_MAX_MS = 60000.0 / 42.0    # 1428.571... ms

BR_BAND_HZ = (0.1, 0.4)
BR_GRID_HZ = 4.0
BR_MIN_SPAN_MS = 30_000.0

FLAG_BR_SPECTRAL = "br_spectral"          # BR comes from the invented spectral estimator
FLAG_BR_DEGENERATE = "br_degenerate"      # no spectral peak above the noise floor
FLAG_BR_BAND_CLAMPED = "br_band_clamped"  # dominant modulation fell outside 0.1-0.4 Hz
FLAG_BR_SHORT_SPAN = "br_short_span"      # series too short for any BR estimate
FLAG_DEGENERATE_GEOMETRY = "degenerate_geometry"  # SD2 radicand clamped at zero

FEATURE_NAMES = ("bpm", "ibi", "sdnn", "sdsd", "rmssd", "pnn20", "pnn50",
                 "mad", "sd1", "sd2", "s", "sd_ratio", "br")


@dataclass
class NnSeries:
    """Surviving NN intervals with enough structure to respect gaps.

    ``start_times_ms[i]`` is the time of the beat opening interval ``i``;
    ``adjacent[i]`` says interval ``i`` directly follows interval ``i-1``
    (no rejected interval in between), so successive differences are only
    formed where ``adjacent`` is true.
    """

    intervals_ms: np.ndarray
    start_times_ms: np.ndarray
    adjacent: np.ndarray = field(default=None)

    def __post_init__(self):
        self.intervals_ms = np.asarray(self.intervals_ms, dtype=float)
        self.start_times_ms = np.asarray(self.start_times_ms, dtype=float)
        if self.adjacent is None:
            adj = np.ones(len(self.intervals_ms), dtype=bool)
            if len(adj):
                adj[0] = False
            self.adjacent = adj
        else:
            self.adjacent = np.asarray(self.adjacent, dtype=bool)

    def __len__(self) -> int:
        return len(self.intervals_ms)

    @property
    def end_times_ms(self) -> np.ndarray:
        return self.start_times_ms + self.intervals_ms

    def successive_diffs(self) -> np.ndarray:
        """NN_{i+1} - NN_i, formed only across directly adjacent intervals."""
        if len(self) < 2:
            return np.zeros(0)
        mask = self.adjacent[1:]
        return (self.intervals_ms[1:] - self.intervals_ms[:-1])[mask]


def nn_from_peaks(peaks: PeakList) -> NnSeries:
    """Build the NN series, gating intervals to the 42-210 bpm band.

    An out-of-band interval is dropped and its closing beat is treated as
    suspect, so the interval that beat would open is not formed either; the
    series resumes (as a new run) at the next clean interval.
    """
    if len(peaks) < 3:
        raise InsufficientBeatsError(f"need at least 3 peaks, got {len(peaks)}")
    times = peaks.times_ms
    kept, starts, adjacent = [], [], []
    prev_kept = False
    suspect = False
    # inclusive bounds, with headroom for representation error at the edges
    lo = NN_MIN_MS * (1.0 - 1e-12)
    hi = NN_MAX_MS * (1.0 + 1e-12)
    for k in range(len(times) - 1):
        interval = times[k + 1] - times[k]
        if not (lo <= interval <= hi):
            suspect = True     # the closing beat is likely an artifact
            prev_kept = False
            continue
        if suspect:
            suspect = False    # interval opened by a suspect beat: skip it too
            prev_kept = False
            continue
        kept.append(interval)
        starts.append(times[k])
        adjacent.append(prev_kept)
        prev_kept = True
    if len(kept) < 2:
        raise InsufficientBeatsError(
            f"only {len(kept)} NN intervals survive the physiologic gate")
    return NnSeries(np.array(kept), np.array(starts), np.array(adjacent))


@dataclass(frozen=True)
class FeatureVector:
    """The thirteen per-window features plus quality flags."""

    bpm: float
    ibi_ms: float
    sdnn_ms: float
    sdsd_ms: float
    rmssd_ms: float
    pnn20: float
    pnn50: float
    mad_ms: float
    sd1_ms: float
    sd2_ms: float
    s_area_ms2: float
    sd_ratio: float
    br_per_min: float
    flags: frozenset = frozenset()

    def as_array(self) -> np.ndarray:
        return np.array([self.bpm, self.ibi_ms, self.sdnn_ms, self.sdsd_ms,
                         self.rmssd_ms, self.pnn20, self.pnn50, self.mad_ms,
                         self.sd1_ms, self.sd2_ms, self.s_area_ms2,
                         self.sd_ratio, self.br_per_min])

    @classmethod
    def from_array(cls, values, flags=frozenset()) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} values, got {len(values)}")
        return cls(*values, flags=frozenset(flags))


class BrEstimate(tuple):
    """(breaths/min, flags) pair returned by breathing_rate."""

    def __new__(cls, br: float, flags: frozenset):
        return super().__new__(cls, (br, flags))

    @property
    def br_per_min(self) -> float:
        return self[0]

    @property
    def flags(self) -> frozenset:
        return self[1]


def breathing_rate(nn: NnSeries) -> BrEstimate:
    """Breaths/min from the respiratory modulation of the NN tachogram.

    Cubic interpolation of NN(t) onto a uniform 4 Hz grid, mean removal,
    Hann window, discrete Fourier magnitude; BR is 60x the argmax frequency
    restricted to 0.1-0.4 Hz.
    """
    if len(nn) < 4:
        raise InsufficientDataError("breathing rate needs at least 4 NN intervals")
    t = nn.end_times_ms / 1000.0
    span_ms = (t[-1] - t[0]) * 1000.0
    if span_ms < BR_MIN_SPAN_MS:
        raise InsufficientDataError(
            f"series spans {span_ms / 1000.0:.1f} s; breathing rate needs >= "
            f"{BR_MIN_SPAN_MS / 1000.0:.0f} s")
    if np.any(np.diff(t) <= 0):
        raise InsufficientDataError("tachogram times must be strictly increasing")

    flags = {FLAG_BR_SPECTRAL}
    grid_n = int((t[-1] - t[0]) * BR_GRID_HZ) + 1
    grid = t[0] + np.arange(grid_n) / BR_GRID_HZ
    tachogram = CubicSpline(t, nn.intervals_ms)(grid)
    centered = tachogram - tachogram.mean()
    if float(np.sqrt(np.mean(centered ** 2))) < 1e-9:
        return BrEstimate(0.0, frozenset(flags | {FLAG_BR_DEGENERATE}))

    windowed = centered * np.hanning(grid_n)
    magnitude = np.abs(np.fft.rfft(windowed))
    freqs = np.fft.rfftfreq(grid_n, d=1.0 / BR_GRID_HZ)

    in_band = (freqs >= BR_BAND_HZ[0]) & (freqs <= BR_BAND_HZ[1])
    if not np.any(in_band):
        return BrEstimate(0.0, frozenset(flags | {FLAG_BR_DEGENERATE}))
    band_peak = np.flatnonzero(in_band)[np.argmax(magnitude[in_band])]
    if magnitude[band_peak] < 1e-9:
        return BrEstimate(0.0, frozenset(flags | {FLAG_BR_DEGENERATE}))
    global_peak = 1 + int(np.argmax(magnitude[1:]))  # skip the DC bin
    if not in_band[global_peak]:
        flags.add(FLAG_BR_BAND_CLAMPED)
    return BrEstimate(60.0 * float(freqs[band_peak]), frozenset(flags))


def compute_features(nn: NnSeries) -> FeatureVector:
    """Compute all thirteen features from an NN series (>= 4 intervals)."""
    iv = nn.intervals_ms
    if len(iv) < 4:
        raise InsufficientDataError(f"need >= 4 NN intervals, got {len(iv)}")
    d = nn.successive_diffs()
    if len(d) < 3:
        raise InsufficientDataError(
            f"need >= 3 successive differences, got {len(d)} after gap removal")

    flags = set()
    ibi = float(np.mean(iv))
    bpm = 60000.0 / ibi
    sdnn = float(np.sqrt(np.mean((iv - ibi) ** 2)))
    var_d = float(np.var(d))
    sdsd = math.sqrt(var_d)
    rmssd = float(np.sqrt(np.mean(d ** 2)))
    pnn20 = float(np.mean(np.abs(d) > 20.0))
    pnn50 = float(np.mean(np.abs(d) > 50.0))
    mad = float(np.median(np.abs(iv - np.median(iv))))
    sd1 = math.sqrt(var_d / 2.0)
    radicand = 2.0 * sdnn ** 2 - var_d / 2.0
    if radicand < 0.0:
        radicand = 0.0
        flags.add(FLAG_DEGENERATE_GEOMETRY)
    sd2 = math.sqrt(radicand)
    s_area = math.pi * sd1 * sd2
    sd_ratio = sd1 / sd2 if sd2 > 0.0 else 0.0
    if sd2 == 0.0 and sd1 == 0.0:
        pass  # constant series: ratio pinned to 0 by convention
    elif sd2 == 0.0:
        flags.add(FLAG_DEGENERATE_GEOMETRY)

    try:
        br, br_flags = breathing_rate(nn)
        flags |= br_flags
    except InsufficientDataError:
        br = 0.0
        flags |= {FLAG_BR_SPECTRAL, FLAG_BR_SHORT_SPAN}

    return FeatureVector(bpm=bpm, ibi_ms=ibi, sdnn_ms=sdnn, sdsd_ms=sdsd,
                         rmssd_ms=rmssd, pnn20=pnn20, pnn50=pnn50, mad_ms=mad,
                         sd1_ms=sd1, sd2_ms=sd2, s_area_ms2=s_area,
                         sd_ratio=sd_ratio, br_per_min=br,
                         flags=frozenset(flags))


FEATURE_CSV_HEADER = ("subject,start_time_ms,bpm,ibi,sdnn,sdsd,rmssd,pnn20,"
                      "pnn50,mad,sd1,sd2,s,sd_ratio,br,flags")


def feature_csv_row(subject_id: str, start_time_ms: int, fv: FeatureVector) -> str:
    values = ",".join(f"{v:.10g}" for v in fv.as_array())
    return f"{subject_id},{start_time_ms},{values},{';'.join(sorted(fv.flags))}"


def parse_feature_csv_row(line: str) -> tuple[str, int, FeatureVector]:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 16:
        raise ValueError(f"feature row must have 16 columns, got {len(parts)}")
    flags = frozenset(f for f in parts[15].split(";") if f)
    fv = FeatureVector.from_array([float(v) for v in parts[2:15]], flags=flags)
    return parts[0], int(parts[1]), fv


def write_features_csv(rows, target) -> None:
    """Write (subject_id, start_time_ms, FeatureVector) triples as CSV."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            write_features_csv(rows, fh)
        return
    target.write(FEATURE_CSV_HEADER + "\n")
    for subject_id, start_time_ms, fv in rows:
        target.write(feature_csv_row(subject_id, start_time_ms, fv) + "\n")


def read_features_csv(source) -> list[tuple[str, int, FeatureVector]]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_features_csv(fh)
    rows = []
    for line in source:
        line = line.strip()
        if not line or line.startswith("subject,"):
            continue
        rows.append(parse_feature_csv_row(line))
    return rows
