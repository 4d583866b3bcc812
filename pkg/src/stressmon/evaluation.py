"""Binary task mapping, stratified cross-validation, macro-F1 and the three
experiment protocols (pooled cross-validation, personalization, learning curve).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DatasetError, DegenerateTaskError, InsufficientDataError
from .hrv import FEATURE_NAMES, FeatureVector
from .models import ClassifierSpec, train
from .query import STRESS_LEVELS


@dataclass(frozen=True)
class BinaryTask:
    task_id: str
    positive: frozenset
    negative: frozenset

    def __post_init__(self):
        if self.positive & self.negative:
            raise ValueError("positive and negative level sets overlap")


# The four binary framings: the baseline class is always "not at all" except
# in T4, where mild stress joins the negative side.
BINARY_TASKS = {
    "T1": BinaryTask("T1", frozenset({1}), frozenset({0})),
    "T2": BinaryTask("T2", frozenset({2}), frozenset({0})),
    "T3": BinaryTask("T3", frozenset({3, 4}), frozenset({0})),
    "T4": BinaryTask("T4", frozenset({2, 3, 4}), frozenset({0, 1})),
}


@dataclass
class LabeledDataset:
    """Feature rows joined with 5-level EMA stress labels."""

    X: np.ndarray                  # (m, 13)
    levels: np.ndarray             # (m,) ints 0..4
    subjects: np.ndarray           # (m,) str
    activities: np.ndarray         # (m,) str
    timestamps: np.ndarray         # (m,) int epoch ms

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.levels = np.asarray(self.levels, dtype=int)
        self.subjects = np.asarray(self.subjects, dtype=object)
        self.activities = np.asarray(self.activities, dtype=object)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        m = len(self.X)
        if self.X.ndim != 2 or self.X.shape[1] != len(FEATURE_NAMES):
            raise DatasetError(f"X must be (m, {len(FEATURE_NAMES)})")
        if not all(len(a) == m for a in (self.levels, self.subjects,
                                         self.activities, self.timestamps)):
            raise DatasetError("column lengths disagree")
        if not np.all(np.isfinite(self.X)):
            raise DatasetError("features contain non-finite values")
        if np.any((self.levels < 0) | (self.levels >= len(STRESS_LEVELS))):
            raise DatasetError("stress levels must be 0..4")

    def __len__(self) -> int:
        return len(self.X)

    def select(self, mask) -> "LabeledDataset":
        return LabeledDataset(self.X[mask], self.levels[mask], self.subjects[mask],
                              self.activities[mask], self.timestamps[mask])


LABELED_CSV_HEADER = ("subject,start_time_ms," + ",".join(FEATURE_NAMES)
                      + ",flags,stress_level,activity")


def read_labeled_csv(source) -> LabeledDataset:
    """Read the labeled-export CSV (feature columns + stress_level + activity)."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_labeled_csv(fh)
    X, levels, subjects, activities, timestamps = [], [], [], [], []
    for line in source:
        line = line.strip()
        if not line or line.startswith("subject,"):
            continue
        parts = line.split(",")
        if len(parts) != 18:
            raise DatasetError(f"labeled row must have 18 columns, got {len(parts)}")
        subjects.append(parts[0])
        timestamps.append(int(parts[1]))
        X.append([float(v) for v in parts[2:15]])
        levels.append(int(parts[16]))
        activities.append(parts[17])
    if not X:
        raise DatasetError("no labeled rows found")
    return LabeledDataset(np.array(X), np.array(levels), np.array(subjects, dtype=object),
                          np.array(activities, dtype=object), np.array(timestamps))


def labeled_csv_row(subject, start_time_ms, fv: FeatureVector, level: int,
                    activity: str) -> str:
    values = ",".join(f"{v:.10g}" for v in fv.as_array())
    return (f"{subject},{start_time_ms},{values},{';'.join(sorted(fv.flags))},"
            f"{level},{activity}")


@dataclass
class BinaryDataset:
    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    n_positive: int
    n_negative: int


def map_labels(dataset: LabeledDataset, task: BinaryTask) -> BinaryDataset:
    """Map 5-level rows onto {0,1}; rows in neither set are excluded."""
    pos = np.isin(dataset.levels, list(task.positive))
    neg = np.isin(dataset.levels, list(task.negative))
    keep = pos | neg
    y = pos[keep].astype(int)
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTaskError(
            f"task {task.task_id} yields {n_pos} positive / {n_neg} negative rows")
    return BinaryDataset(X=dataset.X[keep], y=y, subjects=dataset.subjects[keep],
                         n_positive=n_pos, n_negative=n_neg)


def stratified_kfold(y, k: int, seed: int) -> list[np.ndarray]:
    """Index arrays of K disjoint, exhaustive, class-balanced test folds.

    Per class, shuffled indices are split into chunks whose sizes differ by
    at most one; deterministic for a given seed.
    """
    y = np.asarray(y, dtype=int)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if len(members) < k:
            raise DatasetError(
                f"class {cls} has {len(members)} rows; cannot stratify into {k} folds")
        members = rng.permutation(members)
        for fold, chunk in zip(folds, np.array_split(members, k)):
            fold.append(chunk)
    return [np.sort(np.concatenate(parts)) for parts in folds]


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    """2x2 matrix indexed [true][pred]."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    out = np.zeros((2, 2), dtype=int)
    for t, p in ((0, 0), (0, 1), (1, 0), (1, 1)):
        out[t, p] = int(np.sum((y_true == t) & (y_pred == p)))
    return out


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean of both classes' F1; empty precision/recall counts as 0."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} vs {len(y_pred)}")
    if len(y_true) == 0:
        raise ValueError("empty inputs")
    cm = confusion_matrix(y_true, y_pred)
    scores = []
    for cls in (0, 1):
        tp = cm[cls, cls]
        fp = cm[1 - cls, cls]
        fn = cm[cls, 1 - cls]
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall)
                      if precision + recall else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class EvalConfig:
    folds: int = 5
    seed: int = 0


@dataclass
class EvalReport:
    task_id: str
    kind: str
    n_positive: int
    n_negative: int
    fold_scores: list[float]
    confusions: list[np.ndarray]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_scores))

    def format_row(self) -> str:
        """Two-decimal "mean +/- std" formatting used by the results tables."""
        return f"{self.mean:.2f} ± {self.std:.2f}"

    def csv_rows(self) -> list[str]:
        rows = ["task,model,fold,macro_f1"]
        rows += [f"{self.task_id},{self.kind},{i},{s:.6f}"
                 for i, s in enumerate(self.fold_scores)]
        rows.append(f"{self.task_id},{self.kind},mean,{self.mean:.6f}")
        rows.append(f"{self.task_id},{self.kind},std,{self.std:.6f}")
        return rows


def run_crossval(dataset: LabeledDataset, task: BinaryTask, spec: ClassifierSpec,
                 config: EvalConfig = EvalConfig()) -> EvalReport:
    """Stratified K-fold cross-validation reporting macro-F1 mean and std."""
    binary = map_labels(dataset, task)
    folds = stratified_kfold(binary.y, config.folds, config.seed)
    all_idx = np.arange(len(binary.y))
    scores, confusions = [], []
    for test_idx in folds:
        train_mask = ~np.isin(all_idx, test_idx)
        model = train(spec, binary.X[train_mask], binary.y[train_mask])
        preds = model.predict(binary.X[test_idx])
        scores.append(macro_f1(binary.y[test_idx], preds))
        confusions.append(confusion_matrix(binary.y[test_idx], preds))
    return EvalReport(task_id=task.task_id, kind=spec.kind,
                      n_positive=binary.n_positive, n_negative=binary.n_negative,
                      fold_scores=scores, confusions=confusions)


@dataclass
class PersonalizationResult:
    subject: str
    before: float
    after: float


def run_personalization(dataset: LabeledDataset, held_subject: str, task: BinaryTask,
                        spec: ClassifierSpec, seed: int = 0) -> PersonalizationResult:
    """Macro-F1 on half a subject's rows, before and after adding the other half
    of that subject's rows to the cohort training set.
    """
    held_mask = dataset.subjects == held_subject
    if int(held_mask.sum()) < 20:
        raise InsufficientDataError(
            f"subject {held_subject!r} has {int(held_mask.sum())} labeled rows; need >= 20")
    binary = map_labels(dataset, task)
    held = binary.subjects == held_subject
    cohort_idx = np.flatnonzero(~held)
    held_idx = np.flatnonzero(held)

    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(held_idx)
    test_half = shuffled[: len(shuffled) // 2]
    train_half = shuffled[len(shuffled) // 2:]

    model = train(spec, binary.X[cohort_idx], binary.y[cohort_idx])
    before = macro_f1(binary.y[test_half], model.predict(binary.X[test_half]))

    augmented = np.concatenate([cohort_idx, train_half])
    model = train(spec, binary.X[augmented], binary.y[augmented])
    after = macro_f1(binary.y[test_half], model.predict(binary.X[test_half]))
    return PersonalizationResult(subject=held_subject, before=before, after=after)


@dataclass
class LearningCurvePoint:
    train_size: int
    mean: float
    std: float


def run_learning_curve(X, y, train_sizes, spec: ClassifierSpec, test_size: int = 100,
                       repeats: int = 100, seed: int = 0) -> list[LearningCurvePoint]:
    """Repeatedly split off a random test set and train on growing prefixes.

    Each repeat draws its own test set and training order; within a repeat the
    training subsets are nested, so the curve isolates the effect of size.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    train_sizes = sorted(int(s) for s in train_sizes)
    if not train_sizes:
        raise ValueError("train_sizes must be non-empty")
    max_feasible = len(y) - test_size
    if train_sizes[-1] > max_feasible:
        raise InsufficientDataError(
            f"need {test_size + train_sizes[-1]} rows, have {len(y)}; "
            f"maximal feasible train size is {max_feasible}")

    seed_seq = np.random.SeedSequence(seed)
    scores = np.zeros((repeats, len(train_sizes)))
    for r, child in enumerate(seed_seq.spawn(repeats)):
        rng = np.random.default_rng(child)
        perm = rng.permutation(len(y))
        test_idx = perm[:test_size]
        pool = perm[test_size:]
        model_seed = int(rng.integers(0, 2 ** 31))
        for j, size in enumerate(train_sizes):
            subset = pool[:size]
            model = train(replace(spec, seed=model_seed + j), X[subset], y[subset])
            scores[r, j] = macro_f1(y[test_idx], model.predict(X[test_idx]))
    return [LearningCurvePoint(train_size=s, mean=float(scores[:, j].mean()),
                               std=float(scores[:, j].std()))
            for j, s in enumerate(train_sizes)]
