import json
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import learning_curve_rows, two_gaussians

from stressmon.cli import main
from stressmon.evaluation import LABELED_CSV_HEADER, labeled_csv_row
from stressmon.hrv import FeatureVector
from stressmon.synth import synthesize_ppg
from stressmon.windows import write_window_csv


def write_labeled_dataset(path, rng, n=200, subjects=("s01", "s02")):
    X, y = two_gaussians(rng, n=n)
    lines = [LABELED_CSV_HEADER]
    for i, (row, label) in enumerate(zip(X, y)):
        fv = FeatureVector(*row, flags=frozenset())
        subject = subjects[i % len(subjects)]
        lines.append(labeled_csv_row(subject, 1000 + i * 900_000, fv,
                                     2 if label else 0, "sitting"))
    path.write_text("\n".join(lines) + "\n")


class TestProcess:
    def test_feature_rows_per_usable_window(self, tmp_path, capsys):
        src = tmp_path / "windows.csv"
        with open(src, "w") as fh:
            for i in range(3):
                window, _ = synthesize_ppg(70 + i, 20.0, 0.05, 0.2, seed=i,
                                           subject_id="s01",
                                           start_time_ms=i * 900_000)
                write_window_csv(window, fh)
            # one hopeless flat window
            from stressmon.windows import RawWindow
            write_window_csv(RawWindow("s01", 99 * 900_000, 20.0,
                                       np.full(2400, 3.0)), fh)
        out = tmp_path / "features.csv"
        code = main(["process", "--in", str(src), "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 4  # header + 3 usable
        manifest = json.loads((tmp_path / "features.csv.manifest.json").read_text())
        assert manifest["usable"] == 3 and manifest["unusable"] == 1

    def test_missing_input(self, tmp_path):
        code = main(["process", "--in", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "out.csv")])
        assert code != 0


class TestExperiments:
    def test_crossval_deterministic(self, tmp_path, rng, capsys):
        data = tmp_path / "labeled.csv"
        write_labeled_dataset(data, rng)
        argv = ["experiment", "crossval", "--data", str(data), "--task", "T2",
                "--model", "rf", "--seed", "7", "--trees", "20",
                "--out", str(tmp_path / "report.csv")]
        assert main(argv) == 0
        first = capsys.readouterr().out
        report_one = (tmp_path / "report.csv").read_text()
        assert main(argv) == 0
        assert capsys.readouterr().out == first
        assert (tmp_path / "report.csv").read_text() == report_one
        assert "±" in first

    def test_personalization_command(self, tmp_path, rng, capsys):
        data = tmp_path / "labeled.csv"
        write_labeled_dataset(data, rng, n=240)
        assert main(["experiment", "personalization", "--data", str(data),
                     "--subject", "s01", "--task", "T2", "--model", "knn",
                     "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert "before" in out and "after" in out

    def test_learning_curve_command(self, tmp_path, capsys):
        X, y = learning_curve_rows(seed=5, n=260)
        lines = [LABELED_CSV_HEADER]
        for i, (row, label) in enumerate(zip(X, y)):
            fv = FeatureVector(*row, flags=frozenset())
            lines.append(labeled_csv_row("s01", i * 900_000, fv,
                                         2 if label else 0, "sitting"))
        data = tmp_path / "labeled.csv"
        data.write_text("\n".join(lines) + "\n")
        out = tmp_path / "curve.csv"
        assert main(["experiment", "learning-curve", "--data", str(data),
                     "--task", "T2", "--model", "rf", "--seed", "2",
                     "--sizes", "50:150:50", "--test-size", "60",
                     "--repeats", "3", "--trees", "10", "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "train_size,mean_macro_f1,std_macro_f1"
        assert len(rows) == 4

    def test_degenerate_task_exit_code(self, tmp_path, rng):
        data = tmp_path / "labeled.csv"
        X, _ = two_gaussians(rng, n=40)
        lines = [labeled_csv_row("s01", i, FeatureVector(*row), 0, "sitting")
                 for i, row in enumerate(X)]
        data.write_text("\n".join(lines) + "\n")
        assert main(["experiment", "crossval", "--data", str(data),
                     "--task", "T2", "--model", "knn", "--seed", "1"]) == 3


class TestUsage:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["process", "--nonsense"])
        assert exc.value.code == 2

    def test_missing_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.mark.slow
class TestServeSimulateRoundtrip:
    def test_end_to_end(self, tmp_path):
        port = free_port()
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "data_dir": str(tmp_path / "data"),
            "listen_host": "127.0.0.1",
            "listen_port": port,
            "fsync": False,
            "query": {"initial_count": 5, "density_divisor": 5.0, "rng_seed": 1},
        }))
        server = subprocess.Popen(
            [sys.executable, "-m", "stressmon.cli", "serve", "--config",
             str(config)],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        try:
            import httpx
            base = f"http://127.0.0.1:{port}"
            for _ in range(100):
                try:
                    if httpx.get(f"{base}/healthz", timeout=1.0).status_code == 200:
                        break
                except Exception:
                    time.sleep(0.1)
            else:
                raise AssertionError("server never became healthy")

            code = main(["simulate", "--server", base, "--days", "0.25",
                         "--subjects", "2", "--seed", "1", "--accel", "0",
                         "--report-dir", str(tmp_path / "reports")])
            assert code == 0
            stats = httpx.get(f"{base}/api/v1/stats", timeout=5.0).json()
            assert len(stats["subjects"]) == 2
            assert all(s["windows"] > 0 for s in stats["subjects"].values())

            out = tmp_path / "export.csv"
            assert main(["export", "--server", base, "--kind", "unlabeled",
                         "--out", str(out)]) == 0
            assert out.read_text().startswith("subject,")
            reports = sorted((tmp_path / "reports").glob("sim*.csv"))
            assert len(reports) == 2
        finally:
            server.terminate()
            server.wait(timeout=10)

    def test_unreachable_server_exit_4(self, tmp_path):
        assert main(["simulate", "--server", "http://127.0.0.1:1",
                     "--days", "0.1", "--subjects", "1", "--seed", "1"]) == 4
        assert main(["export", "--server", "http://127.0.0.1:1",
                     "--kind", "labeled", "--out", str(tmp_path / "x.csv")]) == 4
