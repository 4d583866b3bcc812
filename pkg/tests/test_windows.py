import io

import numpy as np
import pytest

from stressmon.errors import InvalidWindowError
from stressmon.windows import (RawWindow, read_windows_csv, read_windows_path,
                               write_window_csv)


def sample_window(n=2400, subject="s01", start=1_700_000_000_000, motion=False):
    rng = np.random.default_rng(1)
    return RawWindow(subject_id=subject, start_time_ms=start, sample_rate_hz=20.0,
                     ppg=rng.normal(8.0, 1.0, n),
                     motion=rng.normal(0.0, 0.1, (n, 3)) if motion else None)


class TestValidation:
    def test_good_window(self):
        sample_window().validate()

    def test_wrong_length(self):
        with pytest.raises(InvalidWindowError):
            sample_window(n=100).validate()

    def test_any_length_when_duration_unconstrained(self):
        sample_window(n=100).validate(expected_duration_s=None)

    def test_nan_rejected(self):
        window = sample_window()
        window.ppg[5] = np.nan
        with pytest.raises(InvalidWindowError):
            window.validate()

    def test_rate_must_carry_band(self):
        window = sample_window(n=600)
        window.sample_rate_hz = 5.0
        with pytest.raises(InvalidWindowError):
            window.validate(expected_duration_s=120.0)

    def test_motion_shape_checked(self):
        window = sample_window()
        window.motion = np.zeros((10, 3))
        with pytest.raises(InvalidWindowError):
            window.validate()


class TestCsvRoundtrip:
    def test_single_window(self):
        window = sample_window()
        buf = io.StringIO()
        write_window_csv(window, buf)
        buf.seek(0)
        (back,) = read_windows_csv(buf)
        assert back.subject_id == window.subject_id
        assert back.start_time_ms == window.start_time_ms
        assert back.sample_rate_hz == window.sample_rate_hz
        assert np.allclose(back.ppg, window.ppg, rtol=1e-9)

    def test_motion_carried(self):
        window = sample_window(motion=True)
        buf = io.StringIO()
        write_window_csv(window, buf)
        buf.seek(0)
        (back,) = read_windows_csv(buf)
        assert back.motion is not None
        assert back.motion.shape == window.motion.shape
        assert np.allclose(back.motion, window.motion, rtol=1e-9)

    def test_multi_window_file(self, tmp_path):
        path = tmp_path / "multi.csv"
        for i in range(3):
            write_window_csv(sample_window(start=1000 + i, subject=f"s{i}"), path)
        windows = read_windows_csv(path)
        assert [w.subject_id for w in windows] == ["s0", "s1", "s2"]

    def test_directory_read(self, tmp_path):
        for i in range(2):
            write_window_csv(sample_window(start=i), tmp_path / f"w{i}.csv")
        assert len(read_windows_path(tmp_path)) == 2

    def test_malformed_meta_rejected(self):
        with pytest.raises(InvalidWindowError):
            read_windows_csv(io.StringIO("#meta subject s01\nt_ms,ppg\n0,1\n"))

    def test_rows_before_meta_rejected(self):
        with pytest.raises(InvalidWindowError):
            read_windows_csv(io.StringIO("0,1.5\n"))
