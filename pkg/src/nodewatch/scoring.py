"""Anomaly scoring and ROC evaluation.

Scores follow the reconstruction-error chain: L1 error against the target
vector, normalization by the training-set maximum error, and a clamp to
[0, 1] to form an anomaly probability. Evaluation sweeps every observed
probability as a decision threshold and reports the area under the
resulting ROC curve, per node or pooled across nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MAX_ERROR_FLOOR = 1e-12


@dataclass
class ScoreSeries:
    """Per-bucket anomaly probabilities (and labels) for one node."""

    node_id: str
    bucket_starts: np.ndarray
    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.bucket_starts = np.asarray(self.bucket_starts, dtype=np.int64)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.bucket_starts)
        if not (len(self.probabilities) == n == len(self.labels)):
            raise DataError("score series columns must align")
        if n > 1 and not np.all(np.diff(self.bucket_starts) > 0):
            raise DataError("score series bucket_starts must be strictly increasing")
        if n and (self.probabilities.min() < 0.0 or self.probabilities.max() > 1.0):
            raise DataError("probabilities must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.bucket_starts)


@dataclass
class RocReport:
    """Threshold sweep (descending) with trapezoidal AUC.

    ``points`` holds (threshold, fpr, tpr) from the +inf sentinel at (0, 0)
    down to the smallest observed score at (1, 1).
    """

    points: list[tuple[float, float, float]]
    auc: float
    positives: int
    negatives: int

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "positives": self.positives,
            "negatives": self.negatives,
            "points": [[t, fpr, tpr] for t, fpr, tpr in self.points],
        }

    def write_points_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fpr", "tpr"])
            for t, fpr, tpr in self.points:
                writer.writerow([repr(t), repr(fpr), repr(tpr)])


def reconstruction_error(output: np.ndarray, target: np.ndarray) -> float:
    """Sum of absolute differences between reconstruction and target."""
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise DataError(
            f"reconstruction/target shape mismatch: {output.shape} vs {target.shape}"
        )
    return float(np.abs(output - target).sum())


def normalize_error(error: float, max_train_error: float) -> float:
    """Divide by the training-set maximum error (floored upstream)."""
    if max_train_error <= 0:
        raise DataError(f"max_train_error must be positive, got {max_train_error}")
    return error / max_train_error


def anomaly_probability(normalized_error: float) -> float:
    """Clamp the normalized error at 1 to form a probability."""
    if normalized_error < 0:
        raise DataError(f"normalized error must be >= 0, got {normalized_error}")
    return 1.0 if normalized_error >= 1.0 else normalized_error


def classify(probability: float, threshold: float) -> int:
    """1 iff the probability reaches the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"threshold must lie in [0, 1], got {threshold}")
    return 1 if probability >= threshold else 0


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> RocReport:
    """Exact ROC over all observed score thresholds.

    Tied scores move between classes together, which makes the trapezoidal
    area identical to the Mann-Whitney pairwise statistic with ties counted
    as one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be equal-length vectors")
    positives = int((labels == 1).sum())
    negatives = int((labels == 0).sum())
    if positives == 0:
        raise DataError("ROC undefined: no positive (label 1) samples")
    if negatives == 0:
        raise DataError("ROC undefined: no negative (label 0) samples")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # last index of each tie group
    distinct = np.flatnonzero(np.diff(sorted_scores) != 0)
    group_ends = np.concatenate((distinct, [len(scores) - 1]))

    tp = np.cumsum(sorted_labels == 1)[group_ends]
    fp = np.cumsum(sorted_labels == 0)[group_ends]
    points = [(math.inf, 0.0, 0.0)]
    points.extend(
        (float(sorted_scores[end]), fp_i / negatives, tp_i / positives)
        for end, fp_i, tp_i in zip(group_ends, fp, tp)
    )

    fpr = np.array([p[1] for p in points])
    tpr = np.array([p[2] for p in points])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocReport(points=points, auc=auc, positives=positives, negatives=negatives)


def roc_from_series(series: ScoreSeries) -> RocReport:
    return roc_curve(series.probabilities, series.labels)


def pool_nodes(series_list: list[ScoreSeries]) -> RocReport:
    """Concatenate all nodes' (probability, label) pairs and compute one ROC.

    Nodes are unweighted: a node with more scored buckets contributes more
    pairs, exactly as if its rows had been appended to one big test set.
    """
    if not series_list:
        raise DataError("cannot pool an empty list of score series")
    scores = np.concatenate([s.probabilities for s in series_list])
    labels = np.concatenate([s.labels for s in series_list])
    return roc_curve(scores, labels)


def write_scores_csv(path: str | Path, series_list: list[ScoreSeries]) -> None:
    """Write pooled score rows as ``node_id,bucket_start,probability,label``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "bucket_start", "probability", "label"])
        for series in series_list:
            for i in range(len(series)):
                writer.writerow(
                    [
                        series.node_id,
                        int(series.bucket_starts[i]),
                        repr(float(series.probabilities[i])),
                        int(series.labels[i]),
                    ]
                )


def read_scores_csv(path: str | Path) -> list[ScoreSeries]:
    """Read a score CSV back into per-node series (rows grouped by node)."""
    rows_by_node: dict[str, list[tuple[int, float, int]]] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["node_id", "bucket_start", "probability", "label"]
        if reader.fieldnames != expected:
            raise DataError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            rows_by_node.setdefault(row["node_id"], []).append(
                (int(row["bucket_start"]), float(row["probability"]), int(row["label"]))
            )
    series_list = []
    for node_id in sorted(rows_by_node):
        rows = sorted(rows_by_node[node_id])
        series_list.append(
            ScoreSeries(
                node_id=node_id,
                bucket_starts=np.array([r[0] for r in rows], dtype=np.int64),
                probabilities=np.array([r[1] for r in rows], dtype=np.float64),
                labels=np.array([r[2] for r in rows], dtype=np.int64),
            )
        )
    return series_list
