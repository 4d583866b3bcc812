"""Window-to-features composition: filter -> moving average -> peaks -> NN -> features."""

from __future__ import annotations

from dataclasses import dataclass, field

from .dsp import (DEFAULT_MA_WINDOW, FilterCoefficients, FilterSpec, PeakList,
                  apply_filter, design_bandpass, detect_peaks, moving_average)
from .hrv import FeatureVector, compute_features, nn_from_peaks
from .windows import RawWindow


@dataclass(frozen=True)
class PipelineConfig:
    filter_spec: FilterSpec = FilterSpec()
    ma_window: int = DEFAULT_MA_WINDOW
    peak_alpha: float = 0.5
    peak_stat_window_s: float = 2.0
    # Filter edge transients can masquerade as beats; ignore the outermost second.
    edge_exclude_s: float = 1.0


class WindowPipeline:
    """Reusable pipeline; designs the filter once and processes many windows."""

    def __init__(self, config: PipelineConfig = PipelineConfig()):
        self.config = config
        self._coeffs_cache: dict[float, FilterCoefficients] = {}

    def _coeffs_for(self, sample_rate_hz: float) -> FilterCoefficients:
        if sample_rate_hz not in self._coeffs_cache:
            spec = self.config.filter_spec
            if spec.sample_rate_hz != sample_rate_hz:
                spec = FilterSpec(order=spec.order, low_cut_hz=spec.low_cut_hz,
                                  high_cut_hz=spec.high_cut_hz,
                                  sample_rate_hz=sample_rate_hz)
            self._coeffs_cache[sample_rate_hz] = design_bandpass(spec)
        return self._coeffs_cache[sample_rate_hz]

    def peaks(self, window: RawWindow) -> PeakList:
        filtered = apply_filter(self._coeffs_for(window.sample_rate_hz), window.ppg)
        smoothed = moving_average(filtered, self.config.ma_window)
        return detect_peaks(smoothed, window.sample_rate_hz,
                            alpha=self.config.peak_alpha,
                            stat_window_s=self.config.peak_stat_window_s,
                            edge_exclude_s=self.config.edge_exclude_s)

    def features(self, window: RawWindow) -> FeatureVector:
        """May raise InsufficientBeatsError / InsufficientDataError for poor windows."""
        return compute_features(nn_from_peaks(self.peaks(window)))


def extract_features(window: RawWindow,
                     config: PipelineConfig = PipelineConfig()) -> FeatureVector:
    """One-shot convenience wrapper around WindowPipeline."""
    return WindowPipeline(config).features(window)
