"""Embedding quality and downstream 1NN classification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ValidationError

METRICS = ("sam", "euclidean")


def frobenius_residual(high_D, low_D):
    """Frobenius norm of the difference between two distance matrices."""
    high_D = np.asarray(high_D, dtype=np.float64)
    low_D = np.asarray(low_D, dtype=np.float64)
    if high_D.shape != low_D.shape or high_D.ndim != 2:
        raise ValidationError(f"shape mismatch: {high_D.shape} vs {low_D.shape}")
    return float(np.sqrt(np.sum((low_D - high_D) ** 2)))


def distance_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    return squareform(pdist(X))


def spectral_angle(a, b):
    """Angle in radians between two nonzero vectors."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError("vectors must have the same length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValidationError("spectral angle is undefined for a zero vector")
    return float(np.arccos(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)))


def _unit_rows(X, what):
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValidationError(f"{what} contains a zero vector; spectral angle undefined")
    return X / norms[:, None]


def pairwise_metric(A, B, metric="sam"):
    """Distances between rows of A and rows of B under ``metric``."""
    if metric == "sam":
        cos = _unit_rows(A, "query set") @ _unit_rows(B, "reference set").T
        return np.arccos(np.clip(cos, -1.0, 1.0))
    if metric == "euclidean":
        return cdist(A, B)
    raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")


def default_metric(m):
    return "euclidean" if m == 1 else "sam"


def knn1_classify(train_Z, train_labels, test_Z, metric=None):
    """Label each test point with its nearest training point's label.

    Ties go to the lowest training index.  ``metric`` defaults to the
    spectral angle for m >= 2 and euclidean distance for m = 1.
    """
    train_Z = np.atleast_2d(np.asarray(train_Z, dtype=np.float64))
    test_Z = np.atleast_2d(np.asarray(test_Z, dtype=np.float64))
    train_labels = np.asarray(train_labels)
    if train_Z.shape[0] == 0:
        raise ValidationError("empty training set")
    if train_labels.shape != (train_Z.shape[0],):
        raise ValidationError("need one label per training point")
    if test_Z.shape[1] != train_Z.shape[1]:
        raise ValidationError("train and test dimensions differ")
    metric = default_metric(train_Z.shape[1]) if metric is None else metric
    D = pairwise_metric(test_Z, train_Z, metric)
    return train_labels[np.argmin(D, axis=1)]


class NearestNeighborClassifier(ClassifierMixin, BaseEstimator):
    """1NN classifier with a spectral-angle or euclidean metric.

    Parameters
    ----------
    metric : {"sam", "euclidean"} or None
        None picks euclidean for one-dimensional inputs, spectral angle
        otherwise.
    """

    def __init__(self, metric=None):
        self.metric = metric

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if self.metric not in (None, *METRICS):
            raise ValidationError(f"unknown metric {self.metric!r}")
        self.X_ = X
        self.y_ = y
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        self.metric_ = default_metric(X.shape[1]) if self.metric is None else self.metric
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return knn1_classify(self.X_, self.y_, X, self.metric_)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray
    classes: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError("confusion matrix must be square")
        if np.any(counts < 0):
            raise ValidationError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "classes", np.asarray(self.classes))

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts)
        return cls(counts, np.arange(1, counts.shape[0] + 1))

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        if not np.array_equal(self.classes, other.classes):
            raise ValidationError("cannot add confusion matrices over different classes")
        return ConfusionMatrix(self.counts + other.counts, self.classes)


def confusion_matrix(y_true, y_pred, classes=None):
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValidationError("y_true and y_pred differ in length")
    if classes is None:
        classes = np.unique(np.concatenate([y_true, y_pred]))
    classes = np.asarray(classes)
    index = {c: i for i, c in enumerate(classes.tolist())}
    counts = np.zeros((classes.size, classes.size), dtype=np.int64)
    for t, p in zip(y_true.tolist(), y_pred.tolist()):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(counts, classes)


def _counts(cm):
    return cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm, dtype=np.int64)


def overall_accuracy(cm):
    """Percentage of samples on the diagonal."""
    counts = _counts(cm)
    total = counts.sum()
    if total == 0:
        raise ValidationError("empty confusion matrix")
    return 100.0 * np.trace(counts) / total


def per_class_accuracy(cm):
    counts = _counts(cm).astype(np.float64)
    support = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, 100.0 * np.diag(counts) / support, np.nan)


def kappa_statistic(cm):
    """Chance-corrected agreement; NaN when the chance term fills the denominator."""
    counts = _counts(cm).astype(np.float64)
    n = counts.sum()
    if n == 0:
        raise ValidationError("empty confusion matrix")
    chance = float(np.dot(counts.sum(axis=1), counts.sum(axis=0)))
    denom = n * n - chance
    if denom == 0:
        return float("nan")
    return float((n * np.trace(counts) - chance) / denom)


def _half_up(x):
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def stratified_split(labels, train_fraction=0.7, seed=0):
    """Per-class random split; returns sorted (train_idx, test_idx).

    Each class contributes round_half_up(fraction * size) members to the
    training set, kept within [1, size - 1] so both sides see every class.
    """
    labels = np.asarray(labels)
    if not 0 < train_fraction < 1:
        raise ValidationError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise ValidationError(f"class {c} has fewer than 2 members")
        n_train = min(max(_half_up(train_fraction * idx.size), 1), idx.size - 1)
        perm = rng.permutation(idx)
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass(frozen=True)
class EvaluationReport:
    overall_accuracy: float
    overall_accuracy_se: float
    kappa: float
    kappa_se: float
    per_class_accuracy: np.ndarray
    per_class_se: np.ndarray
    classes: np.ndarray
    confusion: ConfusionMatrix
    runs: int
    dimension: int
    metric: str
    frobenius: float | None = None

    @property
    def error(self):
        return 100.0 - self.overall_accuracy

    def table(self):
        """Human-readable summary."""
        lines = [
            f"runs={self.runs} dimension={self.dimension} metric={self.metric}",
            f"{'class':>8} {'accuracy':>10} {'stderr':>8}",
        ]
        for c, a, s in zip(self.classes, self.per_class_accuracy, self.per_class_se):
            lines.append(f"{c!s:>8} {a:10.2f} {s:8.2f}")
        lines.append(f"{'OA':>8} {self.overall_accuracy:10.2f} {self.overall_accuracy_se:8.2f}")
        lines.append(f"{'kappa':>8} {self.kappa:10.4f} {self.kappa_se:8.4f}")
        if self.frobenius is not None:
            lines.append(f"frobenius residual {self.frobenius:.6g}")
        return "\n".join(lines)


def _stderr(values, axis=0):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[axis]
    if n < 2:
        return np.zeros(np.delete(values.shape, axis)) if values.ndim > 1 else 0.0
    return np.std(values, axis=axis, ddof=1) / np.sqrt(n)


def evaluate_split(Z, labels, train_idx, test_idx, metric=None, classes=None):
    pred = knn1_classify(Z[train_idx], labels[train_idx], Z[test_idx], metric)
    return confusion_matrix(labels[test_idx], pred, classes)


def repeated_evaluation(Z, labels, runs=10, seed=0, train_fraction=0.7, metric=None, frobenius=None):
    """Average 1NN accuracy and kappa over ``runs`` stratified splits.

    Per-run seeds are spawned from ``seed``, so results do not depend on
    the order in which runs are evaluated.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    labels = np.asarray(labels)
    if runs < 1:
        raise ValidationError("runs must be >= 1")
    if labels.shape != (Z.shape[0],):
        raise ValidationError("need one label per embedded point")
    metric = default_metric(Z.shape[1]) if metric is None else metric
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    classes = np.unique(labels)
    seeds = np.random.SeedSequence(seed).spawn(runs)
    oa, ks, pc, total = [], [], [], None
    for ss in seeds:
        tr, te = stratified_split(labels, train_fraction, ss)
        cm = evaluate_split(Z, labels, tr, te, metric, classes)
        total = cm if total is None else total + cm
        oa.append(overall_accuracy(cm))
        ks.append(kappa_statistic(cm))
        pc.append(per_class_accuracy(cm))
    return EvaluationReport(
        overall_accuracy=float(np.mean(oa)),
        overall_accuracy_se=float(_stderr(oa)),
        kappa=float(np.mean(ks)),
        kappa_se=float(_stderr(ks)),
        per_class_accuracy=np.mean(pc, axis=0),
        per_class_se=np.asarray(_stderr(np.array(pc))),
        classes=classes,
        confusion=total,
        runs=runs,
        dimension=Z.shape[1],
        metric=metric,
        frobenius=frobenius,
    )


@dataclass(frozen=True)
class SweepRow:
    m: int
    mean_error: float
    std_error: float
    metric: str


def dimension_sweep(graph, field, labels, dims, runs=10, seed=0, config=None, train_fraction=0.7, metric=None):
    """Embed at each dimension and report 1NN misclassification error (%)."""
    from .engine import EngineConfig, run

    dims = sorted({int(m) for m in dims})
    if not dims or dims[0] < 1:
        raise ValidationError("dims must be a nonempty list of positive integers")
    config = EngineConfig(seed=seed) if config is None else config
    rows = []
    for m in dims:
        result = run(graph, field, config, m=m)
        report = repeated_evaluation(result.Z, labels, runs, seed, train_fraction, metric)
        rows.append(SweepRow(m, report.error, report.overall_accuracy_se, report.metric))
    return rows
