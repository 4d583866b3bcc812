"""Synthetic PPG generation with known beat times.

Each beat contributes an asymmetric pulse (a systolic peak plus a smaller,
later dicrotic bump); beat-to-beat intervals follow the heart-rate profile
with optional Gaussian jitter, clamped to the 42-210 bpm physiologic band.
Low-frequency baseline drift and white noise are added on top.  Everything
is drawn from a single seeded generator, so equal seeds give bitwise-equal
windows.
"""

from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .dsp import MAX_PLAUSIBLE_BPM, MIN_PLAUSIBLE_BPM
from .windows import RawWindow

HrProfile = Union[float, int, Callable[[float], float]]

_MIN_INTERVAL_S = 60.0 / MAX_PLAUSIBLE_BPM
_MAX_INTERVAL_S = 60.0 / MIN_PLAUSIBLE_BPM

DICROTIC_AMPLITUDE = 0.28
DICROTIC_DELAY_FRAC = 0.38   # of the current beat interval
DICROTIC_WIDTH_FRAC = 0.16
BASELINE_OFFSET = 8.0        # arbitrary sensor units of DC


def _systolic_width_frac(interval_s: float) -> float:
    """Pulse width relative to the beat interval.

    At rest the systolic upstroke occupies ~11% of the beat; as the interval
    shrinks toward the 210 bpm limit the waveform fills the period and turns
    near-sinusoidal, so the relative width grows toward ~17%.
    """
    return 0.11 + 0.06 * float(np.clip((0.5 - interval_s) / (0.5 - 60.0 / 210.0), 0.0, 1.0))


def _dicrotic_scale(interval_s: float) -> float:
    """The dicrotic notch flattens out at high heart rates."""
    return float(np.clip((interval_s - 0.30) / 0.20, 0.0, 1.0))


def _profile_at(hr_profile: HrProfile, t_s: float) -> float:
    hr = hr_profile(t_s) if callable(hr_profile) else float(hr_profile)
    if not (MIN_PLAUSIBLE_BPM <= hr <= MAX_PLAUSIBLE_BPM):
        raise ValueError(
            f"heart-rate profile gave {hr:g} bpm at t={t_s:g}s; must stay within "
            f"[{MIN_PLAUSIBLE_BPM:g}, {MAX_PLAUSIBLE_BPM:g}]")
    return hr


def synthesize_ppg(hr_profile: HrProfile, hrv_jitter_ms: float = 0.0,
                   noise_rms: float = 0.0, drift_amp: float = 0.0,
                   duration_s: float = 120.0, sample_rate_hz: float = 20.0,
                   seed: int = 0, subject_id: str = "synthetic",
                   start_time_ms: int = 0) -> tuple[RawWindow, np.ndarray]:
    """Generate one PPG window; returns (window, ground-truth beat times in ms).

    ``hr_profile`` is either a constant bpm or a callable of window-relative
    time in seconds; values must stay within 42-210 bpm.
    """
    if duration_s <= 0 or sample_rate_hz <= 0:
        raise ValueError("duration_s and sample_rate_hz must be positive")
    rng = np.random.default_rng(seed)

    # Beat schedule: interval = 60/hr plus jitter, kept inside the plausible band.
    beat_times = []
    intervals = []
    t = 0.0
    while t < duration_s:
        beat_times.append(t)
        interval = 60.0 / _profile_at(hr_profile, t)
        if hrv_jitter_ms > 0.0:
            interval += rng.normal(0.0, hrv_jitter_ms / 1000.0)
        interval = float(np.clip(interval, _MIN_INTERVAL_S, _MAX_INTERVAL_S))
        intervals.append(interval)
        t += interval
    beat_times = np.array(beat_times)
    intervals = np.array(intervals)

    n = int(round(duration_s * sample_rate_hz))
    t_samples = np.arange(n) / sample_rate_hz
    ppg = np.zeros(n)
    for tb, iv in zip(beat_times, intervals):
        sigma_sys = _systolic_width_frac(iv) * iv
        sigma_dic = DICROTIC_WIDTH_FRAC * iv
        t_dic = tb + DICROTIC_DELAY_FRAC * iv
        lo = max(0, int((tb - 5 * sigma_dic) * sample_rate_hz))
        hi = min(n, int((t_dic + 5 * sigma_dic) * sample_rate_hz) + 1)
        if lo >= hi:
            continue
        seg = t_samples[lo:hi]
        ppg[lo:hi] += np.exp(-0.5 * ((seg - tb) / sigma_sys) ** 2)
        dicrotic = DICROTIC_AMPLITUDE * _dicrotic_scale(iv)
        if dicrotic > 0.0:
            ppg[lo:hi] += dicrotic * np.exp(-0.5 * ((seg - t_dic) / sigma_dic) ** 2)

    if drift_amp > 0.0:
        # Two slow components below 0.2 Hz with random phases.
        f1, f2 = rng.uniform(0.04, 0.2, size=2)
        ph1, ph2 = rng.uniform(0.0, 2 * np.pi, size=2)
        ppg += drift_amp * (0.7 * np.sin(2 * np.pi * f1 * t_samples + ph1)
                            + 0.3 * np.sin(2 * np.pi * f2 * t_samples + ph2))
    if noise_rms > 0.0:
        ppg += rng.normal(0.0, noise_rms, size=n)
    ppg += BASELINE_OFFSET

    window = RawWindow(subject_id=subject_id, start_time_ms=start_time_ms,
                       sample_rate_hz=sample_rate_hz, ppg=ppg)
    return window, beat_times * 1000.0
