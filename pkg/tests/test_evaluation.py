import numpy as np
import pytest

from conftest import learning_curve_rows, subject_shift_cohort, two_gaussians
from oracles import brute_force_macro_f1

from stressmon.errors import (DatasetError, DegenerateTaskError,
                              InsufficientDataError)
from stressmon.evaluation import (BINARY_TASKS, EvalConfig, LabeledDataset,
                                  labeled_csv_row, macro_f1, map_labels,
                                  read_labeled_csv, run_crossval, run_learning_curve,
                                  run_personalization, stratified_kfold)
from stressmon.hrv import FeatureVector
from stressmon.models import ClassifierSpec


def make_dataset(X, levels, subjects=None, activities=None):
    m = len(X)
    return LabeledDataset(
        X=X, levels=levels,
        subjects=subjects if subjects is not None
        else np.array(["s01"] * m, dtype=object),
        activities=activities if activities is not None
        else np.array(["sitting"] * m, dtype=object),
        timestamps=np.arange(m) * 900_000)


def benchmark_dataset(rng, n=400, separation=4.0, positive_level=2):
    X, y = two_gaussians(rng, n=n, separation=separation)
    levels = np.where(y == 1, positive_level, 0)
    return make_dataset(X, levels)


class TestMapLabels:
    def setup_method(self):
        X = np.zeros((5, 13))
        X[:, 0] = np.arange(5)
        self.ds = make_dataset(X, np.array([0, 1, 2, 3, 4]))

    def test_t2_includes_some_excludes_others(self):
        binary = map_labels(self.ds, BINARY_TASKS["T2"])
        assert binary.n_positive == 1 and binary.n_negative == 1
        # row with level 2 ("some") -> 1; level 0 -> 0; 1,3,4 excluded
        assert binary.X[:, 0].tolist() == [0.0, 2.0]
        assert binary.y.tolist() == [0, 1]

    def test_t1_excludes_some(self):
        binary = map_labels(self.ds, BINARY_TASKS["T1"])
        assert binary.X[:, 0].tolist() == [0.0, 1.0]

    def test_baseline_is_negative_everywhere(self):
        for task in BINARY_TASKS.values():
            binary = map_labels(self.ds, task)
            row0 = np.flatnonzero(binary.X[:, 0] == 0.0)
            assert binary.y[row0].tolist() == [0]

    def test_t3_and_t4_compositions(self):
        b3 = map_labels(self.ds, BINARY_TASKS["T3"])
        assert (b3.n_positive, b3.n_negative) == (2, 1)   # {3,4} vs {0}
        b4 = map_labels(self.ds, BINARY_TASKS["T4"])
        assert (b4.n_positive, b4.n_negative) == (3, 2)   # {2,3,4} vs {0,1}

    def test_degenerate_task(self):
        ds = make_dataset(np.zeros((3, 13)), np.array([0, 0, 0]))
        with pytest.raises(DegenerateTaskError):
            map_labels(ds, BINARY_TASKS["T1"])


class TestStratifiedKfold:
    def test_balanced_small(self):
        y = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
        folds = stratified_kfold(y, 5, seed=3)
        for fold in folds:
            assert len(fold) == 2
            assert y[fold].sum() == 1  # exactly one of each class

    def test_imbalanced_counts(self):
        y = np.array([1] * 7 + [0] * 143)
        folds = stratified_kfold(y, 5, seed=1)
        pos = sorted(int(y[f].sum()) for f in folds)
        neg = sorted(len(f) - int(y[f].sum()) for f in folds)
        assert set(pos) <= {1, 2} and sum(pos) == 7
        assert set(neg) <= {28, 29} and sum(neg) == 143

    def test_partition(self):
        y = (np.arange(83) % 2).astype(int)
        folds = stratified_kfold(y, 5, seed=9)
        joined = np.concatenate(folds)
        assert len(joined) == 83
        assert len(np.unique(joined)) == 83

    def test_determinism(self):
        y = (np.arange(60) % 2).astype(int)
        a = stratified_kfold(y, 5, seed=4)
        b = stratified_kfold(y, 5, seed=4)
        assert all(np.array_equal(x, z) for x, z in zip(a, b))
        c = stratified_kfold(y, 5, seed=5)
        assert any(not np.array_equal(x, z) for x, z in zip(a, c))

    def test_class_smaller_than_k(self):
        y = np.array([1, 1, 1] + [0] * 20)
        with pytest.raises(DatasetError):
            stratified_kfold(y, 5, seed=0)


class TestMacroF1:
    def test_perfect(self):
        assert macro_f1([0, 1, 0, 1], [0, 1, 0, 1]) == 1.0

    def test_hand_computed_case(self):
        # class1: P=1, R=1/2 -> F1=2/3; class0: P=2/3, R=1 -> F1=4/5
        assert macro_f1([1, 1, 0, 0], [1, 0, 0, 0]) == pytest.approx(11 / 15)

    def test_zero_overlap(self):
        assert macro_f1([0, 0, 0], [1, 1, 1]) == 0.0

    def test_symmetry_under_relabeling(self, rng):
        for _ in range(20):
            t = rng.integers(0, 2, 30)
            p = rng.integers(0, 2, 30)
            assert macro_f1(t, p) == pytest.approx(macro_f1(1 - t, 1 - p))

    def test_matches_oracle(self, rng):
        for _ in range(100):
            t = rng.integers(0, 2, 25).tolist()
            p = rng.integers(0, 2, 25).tolist()
            assert macro_f1(t, p) == pytest.approx(brute_force_macro_f1(t, p))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            macro_f1([0, 1], [0])


class TestRunCrossval:
    def test_separable_dataset_scores_high(self, rng):
        ds = benchmark_dataset(rng, n=400)
        report = run_crossval(ds, BINARY_TASKS["T2"],
                              ClassifierSpec(kind="random_forest", seed=3),
                              EvalConfig(folds=5, seed=7))
        assert report.mean >= 0.90
        assert len(report.fold_scores) == 5

    def test_shuffled_labels_score_chance(self, rng):
        ds = benchmark_dataset(rng, n=400)
        shuffled = make_dataset(ds.X, np.array(rng.permutation(ds.levels)))
        report = run_crossval(shuffled, BINARY_TASKS["T2"],
                              ClassifierSpec(kind="random_forest", seed=3),
                              EvalConfig(folds=5, seed=7))
        assert report.mean == pytest.approx(0.5, abs=0.1)

    def test_report_formatting(self, rng):
        ds = benchmark_dataset(rng, n=200)
        report = run_crossval(ds, BINARY_TASKS["T2"],
                              ClassifierSpec(kind="knn"), EvalConfig(seed=1))
        text = report.format_row()
        assert "±" in text
        mean_txt, std_txt = text.split(" ± ")
        assert mean_txt == f"{report.mean:.2f}"
        assert std_txt == f"{report.std:.2f}"

    def test_determinism(self, rng):
        ds = benchmark_dataset(rng, n=200)
        spec = ClassifierSpec(kind="random_forest", seed=11, n_trees=20)
        a = run_crossval(ds, BINARY_TASKS["T2"], spec, EvalConfig(seed=5))
        b = run_crossval(ds, BINARY_TASKS["T2"], spec, EvalConfig(seed=5))
        assert a.fold_scores == b.fold_scores


class TestRunPersonalization:
    def test_shifted_subject_improves(self):
        wins = 0
        runs = 15
        for seed in range(runs):
            X, levels, subjects = subject_shift_cohort(seed)
            ds = make_dataset(X, levels, subjects=subjects)
            result = run_personalization(
                ds, "held", BINARY_TASKS["T2"],
                ClassifierSpec(kind="random_forest", seed=seed, n_trees=40),
                seed=seed)
            wins += int(result.after > result.before)
        assert wins >= int(0.8 * runs)

    def test_matched_subject_no_effect(self):
        deltas = []
        for seed in range(10):
            X, levels, subjects = subject_shift_cohort(seed, shift=0.0)
            ds = make_dataset(X, levels, subjects=subjects)
            result = run_personalization(
                ds, "held", BINARY_TASKS["T2"],
                ClassifierSpec(kind="random_forest", seed=seed, n_trees=40),
                seed=seed)
            deltas.append(result.after - result.before)
        assert abs(float(np.mean(deltas))) <= 0.05

    def test_insufficient_subject_rows(self, rng):
        ds = benchmark_dataset(rng, n=60)
        with pytest.raises(InsufficientDataError):
            run_personalization(ds, "missing", BINARY_TASKS["T2"],
                                ClassifierSpec(kind="knn"), seed=0)


class TestRunLearningCurve:
    def test_curve_rises(self):
        X, y = learning_curve_rows(seed=0)
        spec = ClassifierSpec(kind="random_forest", seed=1, n_trees=15, min_leaf=3)
        points = run_learning_curve(X, y, train_sizes=[50, 150, 300, 500],
                                    spec=spec, test_size=100, repeats=20, seed=2)
        means = [p.mean for p in points]
        assert means[-1] > means[0]

    def test_single_repeat_zero_std(self):
        X, y = learning_curve_rows(seed=1, n=300)
        spec = ClassifierSpec(kind="random_forest", seed=1, n_trees=5)
        points = run_learning_curve(X, y, train_sizes=[100], spec=spec,
                                    test_size=50, repeats=1, seed=3)
        assert points[0].std == 0.0

    def test_insufficient_rows_reports_max_feasible(self):
        X, y = learning_curve_rows(seed=2, n=200)
        with pytest.raises(InsufficientDataError, match="150"):
            run_learning_curve(X, y, train_sizes=[200],
                               spec=ClassifierSpec(kind="knn"),
                               test_size=50, repeats=2, seed=0)


class TestLabeledCsv:
    def test_roundtrip(self, rng, tmp_path):
        fv = FeatureVector(*np.arange(13.0), flags=frozenset({"br_spectral"}))
        rows = [labeled_csv_row("s01", 1000 + i, fv, 2, "sitting") for i in range(3)]
        path = tmp_path / "labeled.csv"
        path.write_text("subject,start_time_ms,...\n" + "\n".join(rows) + "\n")
        ds = read_labeled_csv(path)
        assert len(ds) == 3
        assert ds.levels.tolist() == [2, 2, 2]
        assert ds.activities.tolist() == ["sitting"] * 3
        assert np.allclose(ds.X[0], np.arange(13.0))
