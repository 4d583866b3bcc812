"""Deterministic DSP path from a raw PPG window to beat locations.

The band-pass is designed from first principles: an analog Butterworth
low-pass prototype is transformed to a band-pass and digitized with the
bilinear transform (cutoffs prewarped), then factored into second-order
sections.  An analog order-n band-pass yields n sections (digital order 2n).
Filtering is applied forward-backward so beat timing is never shifted.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
from scipy.signal import sosfiltfilt

from .errors import FilterDesignError, SignalTooShortError

# Hard physiologic band: 42-210 bpm.
MIN_PLAUSIBLE_BPM = 42.0
MAX_PLAUSIBLE_BPM = 210.0
REFRACTORY_MS = 60000.0 / MAX_PLAUSIBLE_BPM  # ~285.7 ms between beats

# 0.15 s at 20 Hz.  A 5-sample window would put its first spectral null at
# 4 Hz and attenuate beats near the 210 bpm band edge (3.5 Hz) five-fold;
# 3 samples keeps >= 2/3 gain across the whole 42-210 bpm band.
DEFAULT_MA_WINDOW = 3


@dataclass(frozen=True)
class FilterSpec:
    """Band-pass Butterworth specification (analog prototype order)."""

    order: int = 3
    low_cut_hz: float = 0.7
    high_cut_hz: float = 3.5
    sample_rate_hz: float = 20.0

    def validate(self) -> None:
        if self.order < 1:
            raise FilterDesignError("order must be a positive integer")
        if not (0.0 < self.low_cut_hz < self.high_cut_hz):
            raise FilterDesignError(
                f"cutoffs must satisfy 0 < low < high, got "
                f"({self.low_cut_hz}, {self.high_cut_hz})")
        if self.high_cut_hz >= self.sample_rate_hz / 2.0:
            raise FilterDesignError(
                f"high cutoff {self.high_cut_hz} Hz violates Nyquist for "
                f"fs={self.sample_rate_hz} Hz")


@dataclass(frozen=True)
class FilterCoefficients:
    """Cascade of second-order sections plus a single overall gain.

    ``sections`` has shape (n, 6); each row is (b0, b1, b2, 1, a1, a2).
    """

    sections: np.ndarray
    gain: float
    sample_rate_hz: float

    def poles(self) -> np.ndarray:
        roots = [np.roots(sec[3:]) for sec in self.sections]
        return np.concatenate(roots) if roots else np.zeros(0, dtype=complex)

    def is_stable(self) -> bool:
        poles = self.poles()
        return bool(np.all(np.abs(poles) < 1.0))

    def as_sos(self) -> np.ndarray:
        """SOS array with the overall gain folded into the first section."""
        sos = np.array(self.sections, dtype=float)
        sos[0, :3] *= self.gain
        return sos

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response at the given frequencies (Hz)."""
        freqs_hz = np.asarray(freqs_hz, dtype=float)
        z_inv = np.exp(-2j * np.pi * freqs_hz / self.sample_rate_hz)
        h = np.full(freqs_hz.shape, self.gain, dtype=complex)
        for b0, b1, b2, _, a1, a2 in self.sections:
            h *= (b0 + b1 * z_inv + b2 * z_inv ** 2) / (1.0 + a1 * z_inv + a2 * z_inv ** 2)
        return h

    def magnitude(self, freqs_hz) -> np.ndarray:
        return np.abs(self.response(freqs_hz))


def _pair_conjugates(roots: np.ndarray, tol: float = 1e-8) -> list[tuple[complex, complex]]:
    """Group a conjugate-symmetric root set into quadratic-section pairs."""
    roots = np.asarray(roots, dtype=complex)
    complex_part = roots[np.abs(roots.imag) > tol * np.maximum(np.abs(roots), 1.0)]
    real_part = np.sort(roots[np.abs(roots.imag) <= tol * np.maximum(np.abs(roots), 1.0)].real)
    upper = complex_part[complex_part.imag > 0]
    if 2 * len(upper) != len(complex_part):
        raise FilterDesignError("root set is not conjugate-symmetric")
    pairs = [(r, r.conjugate()) for r in sorted(upper, key=lambda r: (r.real, r.imag))]
    if len(real_part) % 2 != 0:
        raise FilterDesignError("odd number of real roots cannot form sections")
    pairs.extend((real_part[i], real_part[i + 1]) for i in range(0, len(real_part), 2))
    return pairs


def design_bandpass(spec: FilterSpec = FilterSpec()) -> FilterCoefficients:
    """Design the digital Butterworth band-pass as second-order sections.

    Analog prototype poles -> low-pass-to-band-pass transform -> bilinear
    transform with cutoff prewarping.  Magnitude is 1/sqrt(2) (-3 dB) at
    both cutoffs by construction.
    """
    spec.validate()
    n = spec.order
    fs = spec.sample_rate_hz

    # Prewarped analog band edges (rad/s) so the digital -3 dB points land
    # exactly on the requested cutoffs.
    w1 = 2.0 * fs * np.tan(np.pi * spec.low_cut_hz / fs)
    w2 = 2.0 * fs * np.tan(np.pi * spec.high_cut_hz / fs)
    w0 = np.sqrt(w1 * w2)
    bw = w2 - w1

    # Analog Butterworth low-pass prototype: unit-circle poles, left half-plane.
    m = np.arange(-n + 1, n, 2)
    proto = -np.exp(1j * np.pi * m / (2 * n))

    # Low-pass -> band-pass: each prototype pole spawns two band-pass poles;
    # n zeros appear at s = 0 and the gain picks up bw**n.
    scaled = proto * bw / 2.0
    analog_poles = np.concatenate([scaled + np.sqrt(scaled ** 2 - w0 ** 2),
                                   scaled - np.sqrt(scaled ** 2 - w0 ** 2)])
    analog_gain = bw ** n

    # Bilinear transform s = 2*fs*(z-1)/(z+1).  The n analog zeros at s=0 map
    # to z=1; the n zeros at infinity map to z=-1.
    fs2 = 2.0 * fs
    digital_poles = (fs2 + analog_poles) / (fs2 - analog_poles)
    gain = analog_gain * (fs2 ** n / np.prod(fs2 - analog_poles)).real

    if np.any(np.abs(digital_poles) >= 1.0):
        raise FilterDesignError("designed poles fell on or outside the unit circle")

    # One zero at z=1 and one at z=-1 per section: numerator (z-1)(z+1) = z^2 - 1.
    pairs = _pair_conjugates(digital_poles)
    pairs.sort(key=lambda pr: max(abs(pr[0]), abs(pr[1])))
    sections = np.zeros((len(pairs), 6))
    for i, (p1, p2) in enumerate(pairs):
        a1 = -(p1 + p2).real
        a2 = (p1 * p2).real
        sections[i] = (1.0, 0.0, -1.0, 1.0, a1, a2)

    return FilterCoefficients(sections=sections, gain=float(gain), sample_rate_hz=fs)


def apply_filter(coeffs: FilterCoefficients, signal) -> np.ndarray:
    """Zero-phase (forward-backward) application of an SOS cascade.

    Output length equals input length; the two passes square the designed
    magnitude response and cancel its phase, so peak timing is preserved.
    """
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if not coeffs.is_stable():
        raise FilterDesignError("refusing to apply an unstable cascade")
    # sosfiltfilt pads with 3*(2*n_sections+1) samples on each side.
    min_len = 3 * (2 * len(coeffs.sections) + 1) + 1
    if len(signal) < min_len:
        raise SignalTooShortError(
            f"need at least {min_len} samples for a {len(coeffs.sections)}-section "
            f"cascade, got {len(signal)}")
    return sosfiltfilt(coeffs.as_sos(), signal)


def moving_average(signal, window_len: int) -> np.ndarray:
    """Centered moving average; the window shrinks symmetrically at the edges."""
    signal = np.asarray(signal, dtype=float)
    if window_len <= 0 or window_len % 2 == 0:
        raise ValueError(f"window_len must be odd and positive, got {window_len}")
    n = len(signal)
    if window_len > n:
        raise ValueError(f"window_len {window_len} exceeds signal length {n}")
    half = window_len // 2
    idx = np.arange(n)
    reach = np.minimum(half, np.minimum(idx, n - 1 - idx))
    prefix = np.concatenate([[0.0], np.cumsum(signal)])
    return (prefix[idx + reach + 1] - prefix[idx - reach]) / (2 * reach + 1)


@dataclass(frozen=True)
class PeakList:
    """Strictly increasing beat sample indices with their sampling rate."""

    indices: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def times_ms(self) -> np.ndarray:
        return self.indices * (1000.0 / self.sample_rate_hz)


def detect_peaks(signal, sample_rate_hz: float, alpha: float = 0.5,
                 stat_window_s: float = 2.0, edge_exclude_s: float = 0.0) -> PeakList:
    """Adaptive-threshold peak detector for a band-passed pulse signal.

    A sample is a candidate when it is a local maximum above
    rolling_mean + alpha * rolling_std (window ``stat_window_s``).  The
    threshold scales with the signal, so detection is invariant to positive
    rescaling.  Candidates closer than the 285.7 ms refractory period
    (210 bpm) are resolved in favor of the taller peak.  Constant or empty
    input yields an empty PeakList.
    """
    signal = np.asarray(signal, dtype=float)
    n = len(signal)
    if n < 3:
        return PeakList(np.zeros(0, dtype=int), sample_rate_hz)

    win = int(round(stat_window_s * sample_rate_hz))
    win = max(1, min(win if win % 2 == 1 else win + 1, n if n % 2 == 1 else n - 1))
    mean = moving_average(signal, win)
    var = np.clip(moving_average(signal ** 2, win) - mean ** 2, 0.0, None)
    threshold = mean + alpha * np.sqrt(var)

    interior = np.arange(1, n - 1)
    is_max = (signal[interior] > signal[interior - 1]) & (signal[interior] >= signal[interior + 1])
    above = signal[interior] > threshold[interior]
    candidates = interior[is_max & above]

    if edge_exclude_s > 0.0:
        margin = int(round(edge_exclude_s * sample_rate_hz))
        candidates = candidates[(candidates >= margin) & (candidates < n - margin)]
    if len(candidates) == 0:
        return PeakList(np.zeros(0, dtype=int), sample_rate_hz)

    # Tallest-first greedy acceptance under the refractory constraint; ties in
    # height go to the earlier sample for determinism.
    refractory_samples = REFRACTORY_MS * sample_rate_hz / 1000.0
    order = sorted(range(len(candidates)), key=lambda i: (-signal[candidates[i]], candidates[i]))
    accepted: list[int] = []
    for i in order:
        idx = int(candidates[i])
        pos = bisect.bisect_left(accepted, idx)
        left_ok = pos == 0 or idx - accepted[pos - 1] >= refractory_samples
        right_ok = pos == len(accepted) or accepted[pos] - idx >= refractory_samples
        if left_ok and right_ok:
            accepted.insert(pos, idx)
    return PeakList(np.array(accepted, dtype=int), sample_rate_hz)
