"""Evaluation mathematics: per-class top-1, calibrated generalized accuracy,
seen-unseen curves with their area, GZSL harmonic mean, retrieval precision.

Score matrices have one column per class, seen classes first then the
unseen block, each block in ascending class-id order. Argmax ties always
go to the smallest class id.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError


@dataclass
class ScoreMatrix:
    scores: np.ndarray     # (N, n_cls)
    class_ids: np.ndarray  # (n_cls,) seen block then unseen block
    seen_count: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        if not 0 < self.seen_count < self.class_ids.shape[0]:
            raise ConfigError("need at least one seen and one unseen class column")
        if self.scores.shape[1] != self.class_ids.shape[0]:
            raise ConfigError("score columns do not match class ids")
        if not np.isfinite(self.scores).all():
            raise ConfigError("scores must be finite")

    @property
    def seen_ids(self):
        return self.class_ids[: self.seen_count]

    @property
    def unseen_ids(self):
        return self.class_ids[self.seen_count:]


@dataclass
class CalibrationSweep:
    lambda_min: float = -2.0
    lambda_max: float = 2.0
    step: float = 0.01

    def __post_init__(self):
        if self.step <= 0.0 or self.lambda_min >= self.lambda_max:
            raise ConfigError("sweep needs step > 0 and lambda_min < lambda_max")

    def values(self):
        """Half-open grid lambda_min + j*step for j = 0..m-1."""
        m = int(round((self.lambda_max - self.lambda_min) / self.step))
        return self.lambda_min + self.step * np.arange(m)


def predict_labels(scores, class_ids):
    """Row argmax as class ids, ties resolved to the smallest id."""
    scores = np.asarray(scores, dtype=np.float64)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    row_max = scores.max(axis=1, keepdims=True)
    tie = scores == row_max
    big = np.iinfo(np.int64).max
    return np.where(tie, class_ids[None, :], big).min(axis=1)


def _per_class_accuracy(predicted, labels):
    classes = np.unique(labels)
    accs = [
        float((predicted[labels == c] == c).mean()) for c in classes
    ]
    return 100.0 * float(np.mean(accs))


def top1_per_class(scores, class_ids, labels):
    """Average per-class top-1 accuracy (%), argmax over the given columns."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ConfigError("no samples to evaluate")
    missing = set(labels.tolist()) - set(np.asarray(class_ids).tolist())
    if missing:
        raise ConfigError(f"labels outside the class set: {sorted(missing)}")
    return _per_class_accuracy(predict_labels(scores, class_ids), labels)


def _calibrated(sm, lam):
    adjusted = sm.scores.copy()
    adjusted[:, sm.seen_count:] += lam
    return adjusted


def generalized_accuracy(sm, labels, sweep=None):
    """Mean over the calibration sweep of plain sample accuracy (%).

    Each sweep point adds lambda to every unseen-class column before the
    argmax over all classes.
    """
    sweep = sweep or CalibrationSweep()
    labels = np.asarray(labels, dtype=np.int64)
    total = 0.0
    lams = sweep.values()
    for lam in lams:
        pred = predict_labels(_calibrated(sm, lam), sm.class_ids)
        total += float((pred == labels).mean())
    return 100.0 * total / len(lams)


def suc_curve(sm, labels, sweep=None):
    """Seen-unseen accuracy curve over the calibration sweep.

    Returns deduplicated (acc_unseen, acc_seen) fraction pairs sorted by
    acc_unseen ascending.
    """
    sweep = sweep or CalibrationSweep()
    labels = np.asarray(labels, dtype=np.int64)
    seen_set = set(sm.seen_ids.tolist())
    unseen_set = set(sm.unseen_ids.tolist())
    is_seen = np.isin(labels, list(seen_set))
    is_unseen = np.isin(labels, list(unseen_set))
    if not is_seen.any() or not is_unseen.any():
        raise ConfigError("SUC curve needs both seen and unseen test samples")
    points = set()
    for lam in sweep.values():
        pred = predict_labels(_calibrated(sm, lam), sm.class_ids)
        acc_u = _per_class_accuracy(pred[is_unseen], labels[is_unseen]) / 100.0
        acc_s = _per_class_accuracy(pred[is_seen], labels[is_seen]) / 100.0
        points.add((acc_u, acc_s))
    return sorted(points)


def ausuc(points):
    """Trapezoidal area under an SUC point list (fractions on both axes)."""
    if len(points) < 2:
        raise UsageError("AUSUC needs at least two curve points")
    # integrate the upper envelope: several sweep settings can share one
    # unseen accuracy, and only the best seen accuracy there is on the curve
    best = {}
    for x, y in points:
        if x not in best or y > best[x]:
            best[x] = y
    pts = sorted(best.items())
    if len(pts) < 2:
        raise UsageError("AUSUC needs at least two distinct unseen accuracies")
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def gzsl_suh(sm, labels):
    """Uncalibrated GZSL seen/unseen per-class top-1 and their harmonic mean."""
    labels = np.asarray(labels, dtype=np.int64)
    pred = predict_labels(sm.scores, sm.class_ids)
    is_seen = np.isin(labels, sm.seen_ids)
    is_unseen = np.isin(labels, sm.unseen_ids)
    if not is_seen.any() or not is_unseen.any():
        raise ConfigError("GZSL evaluation needs both seen and unseen test samples")
    s = _per_class_accuracy(pred[is_seen], labels[is_seen])
    u = _per_class_accuracy(pred[is_unseen], labels[is_unseen])
    h = 0.0 if s + u == 0.0 else 2.0 * s * u / (s + u)
    return s, u, h


def retrieval_precision(queries, features, labels, ratio):
    """Mean per-class retrieval precision (%) for one retrieval ratio.

    queries maps class id -> query vector. All features are ranked by
    ascending Euclidean distance to the query (ties by sample index) and
    the top ceil(ratio * n_c) are retrieved for class c.
    """
    labels = np.asarray(labels, dtype=np.int64)
    precisions = []
    for c, query in sorted(queries.items()):
        n_c = int((labels == c).sum())
        if n_c == 0:
            raise ConfigError(f"retrieval class {c} has no images")
        d = np.linalg.norm(features - query[None, :], axis=1)
        order = np.argsort(d, kind="stable")
        take = math.ceil(ratio * n_c)
        retrieved = labels[order[:take]]
        precisions.append(float((retrieved == c).mean()))
    return 100.0 * float(np.mean(precisions))


@dataclass
class EvalReport:
    top1_unseen: float
    s: float
    u: float
    h: float
    g_acc: float
    ausuc: float
    suc_points: list = field(default_factory=list)
    map_at: dict = field(default_factory=dict)  # ratio percent (25/50/100) -> mAP
