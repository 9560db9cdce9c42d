"""Preprocessing pipeline: chronological split, semi-supervised filtering,
min/max scaling, time-consistency segmentation, and fixed-length windowing.

The order of operations mirrors how models are fed: split first (training
never sees the future), optionally drop anomalous rows, fit the scaler on
the training rows only, then cut gap-free segments and slide windows over
them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .telemetry import BUCKET_SECONDS, NodeDataset


@dataclass
class ScalerParams:
    """Per-feature train-set minimum and maximum."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self) -> None:
        self.minimum = np.asarray(self.minimum, dtype=np.float64)
        self.maximum = np.asarray(self.maximum, dtype=np.float64)
        if self.minimum.shape != self.maximum.shape or self.minimum.ndim != 1:
            raise DataError("scaler min/max must be 1-D vectors of equal length")
        if np.any(self.minimum > self.maximum):
            raise DataError("scaler has min > max for some feature")

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.array(d["min"], dtype=np.float64), np.array(d["max"], dtype=np.float64))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ScalerParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Segment:
    """A gap-free slice of a NodeDataset (consecutive buckets 900 s apart)."""

    bucket_starts: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.bucket_starts)


@dataclass
class WindowSet:
    """Sliding windows of length W with the final row as target.

    ``sequences`` is (K, W, N); ``targets`` is (K, N) and always equals the
    last row of each sequence; labels and bucket starts are those of the
    target timestep.
    """

    sequences: np.ndarray
    targets: np.ndarray
    target_labels: np.ndarray
    target_bucket_starts: np.ndarray
    window_length: int

    def __len__(self) -> int:
        return len(self.sequences)


@dataclass
class SplitDataset:
    train: NodeDataset
    test: NodeDataset


def chronological_split(dataset: NodeDataset, ratio: float) -> SplitDataset:
    """Split into past (train) and future (test) with no overlap.

    The first floor(ratio * L) buckets become the training set. Splits that
    leave either side empty are rejected.
    """
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split ratio must lie in (0, 1), got {ratio}")
    length = len(dataset)
    if length < 2:
        raise DataError(f"{dataset.node_id}: need at least 2 rows to split, have {length}")
    n_train = int(np.floor(ratio * length))
    if n_train == 0 or n_train == length:
        raise DataError(
            f"{dataset.node_id}: ratio {ratio} leaves an empty side for {length} rows"
        )
    return SplitDataset(
        train=dataset.take(slice(0, n_train)),
        test=dataset.take(slice(n_train, length)),
    )


def semi_supervised_filter(dataset: NodeDataset) -> NodeDataset:
    """Drop anomalous rows (label 1); the holes become segment boundaries."""
    keep = dataset.labels == 0
    if not np.any(keep):
        raise DataError(
            f"{dataset.node_id}: semi-supervised filter removed every row"
        )
    if np.all(keep):
        return dataset
    return dataset.take(np.flatnonzero(keep))


def fit_minmax(train: NodeDataset) -> ScalerParams:
    """Per-feature min/max over the training rows."""
    if len(train) == 0:
        raise DataError("cannot fit scaler on an empty training set")
    return ScalerParams(
        minimum=train.features.min(axis=0), maximum=train.features.max(axis=0)
    )


def apply_minmax(params: ScalerParams, dataset: NodeDataset) -> NodeDataset:
    """Map features through (x - min) / (max - min), without clamping.

    Test values outside the training range deliberately land outside [0, 1]:
    out-of-range readings are themselves anomaly evidence. Constant features
    (max == min) map to 0.0.
    """
    if len(params.minimum) != dataset.feature_count:
        raise DataError(
            f"scaler expects {len(params.minimum)} features, "
            f"dataset has {dataset.feature_count}"
        )
    span = params.maximum - params.minimum
    scaled = np.zeros_like(dataset.features)
    nonzero = span > 0
    scaled[:, nonzero] = (dataset.features[:, nonzero] - params.minimum[nonzero]) / span[
        nonzero
    ]
    return NodeDataset(
        node_id=dataset.node_id,
        bucket_starts=dataset.bucket_starts,
        features=scaled,
        labels=dataset.labels,
        feature_names=list(dataset.feature_names),
    )


def time_consistency_segments(dataset: NodeDataset) -> list[Segment]:
    """Cut the dataset into maximal runs of exactly-consecutive buckets."""
    if len(dataset) == 0:
        return []
    gaps = np.flatnonzero(np.diff(dataset.bucket_starts) != BUCKET_SECONDS)
    bounds = np.concatenate(([0], gaps + 1, [len(dataset)]))
    return [
        Segment(
            bucket_starts=dataset.bucket_starts[lo:hi],
            features=dataset.features[lo:hi],
            labels=dataset.labels[lo:hi],
        )
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]


def make_windows(segments: list[Segment], window_length: int) -> WindowSet:
    """Slide windows of length W over each segment; short segments drop out.

    A segment of length L contributes max(0, L - W + 1) windows. The target
    of a window is its final row, labelled by that row's label.
    """
    if window_length < 1:
        raise DataError(f"window length must be >= 1, got {window_length}")
    seq_parts, tgt_parts, lab_parts, bkt_parts = [], [], [], []
    for seg in segments:
        length = len(seg)
        if length < window_length:
            continue
        view = np.lib.stride_tricks.sliding_window_view(
            seg.features, window_length, axis=0
        )
        # view is (L-W+1, N, W); reorder to (K, W, N)
        seq_parts.append(np.ascontiguousarray(view.transpose(0, 2, 1)))
        tgt_parts.append(seg.features[window_length - 1 :])
        lab_parts.append(seg.labels[window_length - 1 :])
        bkt_parts.append(seg.bucket_starts[window_length - 1 :])
    if not seq_parts:
        n_features = segments[0].features.shape[1] if segments else 0
        return WindowSet(
            sequences=np.empty((0, window_length, n_features)),
            targets=np.empty((0, n_features)),
            target_labels=np.empty((0,), dtype=np.int64),
            target_bucket_starts=np.empty((0,), dtype=np.int64),
            window_length=window_length,
        )
    windows = WindowSet(
        sequences=np.concatenate(seq_parts),
        targets=np.concatenate(tgt_parts),
        target_labels=np.concatenate(lab_parts),
        target_bucket_starts=np.concatenate(bkt_parts),
        window_length=window_length,
    )
    if not np.all(np.isfinite(windows.sequences)):
        raise DataError("windows contain non-finite values")
    return windows
