import numpy as np
import pytest

from stressmon.pipeline import WindowPipeline
from stressmon.synth import synthesize_ppg


class TestSynthesizePpg:
    def test_constant_60_bpm_exact_beats(self):
        window, beats = synthesize_ppg(60, 0.0, 0.0, 0.0, duration_s=120.0, seed=4)
        assert len(beats) == 120
        assert np.allclose(np.diff(beats), 1000.0)
        assert len(window.ppg) == 2400

    def test_seed_determinism(self):
        w1, b1 = synthesize_ppg(75, 30.0, 0.1, 0.4, seed=99)
        w2, b2 = synthesize_ppg(75, 30.0, 0.1, 0.4, seed=99)
        assert np.array_equal(w1.ppg, w2.ppg)
        assert np.array_equal(b1, b2)

    def test_different_seeds_differ(self):
        w1, _ = synthesize_ppg(75, 30.0, 0.1, 0.4, seed=1)
        w2, _ = synthesize_ppg(75, 30.0, 0.1, 0.4, seed=2)
        assert not np.array_equal(w1.ppg, w2.ppg)

    def test_out_of_range_profile_rejected(self):
        with pytest.raises(ValueError):
            synthesize_ppg(250, seed=0)
        with pytest.raises(ValueError):
            synthesize_ppg(lambda t: 30.0, seed=0)

    def test_profile_callable(self):
        window, beats = synthesize_ppg(lambda t: 60.0 if t < 60 else 100.0,
                                       0.0, 0.0, 0.0, seed=0)
        gaps = np.diff(beats)
        assert gaps[0] == pytest.approx(1000.0)
        assert gaps[-1] == pytest.approx(600.0)

    def test_window_length_matches_duration(self):
        window, _ = synthesize_ppg(70, duration_s=60.0, sample_rate_hz=20.0, seed=0)
        assert len(window.ppg) == 1200

    def test_full_pipeline_recovery(self):
        # jittered, noisy window: the filter->smooth->detect chain must recover
        # at least 95% of the ground-truth beats within +/-100 ms.
        window, beats = synthesize_ppg(75, 30.0, 0.1, 0.3, seed=11)
        peaks = WindowPipeline().peaks(window)
        times = peaks.times_ms
        matched = sum(1 for b in beats if np.min(np.abs(times - b)) <= 100.0)
        assert matched / len(beats) >= 0.95
