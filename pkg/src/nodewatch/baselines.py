"""Non-neural detectors: exponential smoothing, k-means clustering with
silhouette-selected k, and a random dummy classifier.

The smoothing detector scores each timestep by how far it lands from the
running per-feature estimate, so it only ever reacts to jumps. The
clustering detector assigns each test row the anomaly rate its nearest
training cluster exhibited — the one place labels enter an otherwise
unsupervised method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .pipeline import time_consistency_segments
from .scoring import ScoreSeries, anomaly_probability
from .telemetry import NodeDataset

KMEANS_MAX_ITER = 300
KMEANS_RESTARTS = 10
SILHOUETTE_SAMPLE_CAP = 2000
DEFAULT_K_RANGE = range(2, 11)


@dataclass
class ExpConfig:
    """Smoothing factor for the exponential baseline."""

    alpha: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise DataError(f"alpha must lie in (0, 1], got {self.alpha}")


@dataclass
class KMeansModel:
    k: int
    centroids: np.ndarray  # (k, N)
    cluster_anomaly_prob: np.ndarray  # (k,)
    seed: int

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        self.cluster_anomaly_prob = np.asarray(self.cluster_anomaly_prob, dtype=np.float64)
        if not np.all(np.isfinite(self.centroids)):
            raise DataError("centroids must be finite")
        if np.any((self.cluster_anomaly_prob < 0) | (self.cluster_anomaly_prob > 1)):
            raise DataError("cluster anomaly probabilities must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "cluster_anomaly_prob": self.cluster_anomaly_prob.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KMeansModel":
        return cls(
            k=d["k"],
            centroids=np.array(d["centroids"], dtype=np.float64),
            cluster_anomaly_prob=np.array(d["cluster_anomaly_prob"], dtype=np.float64),
            seed=d["seed"],
        )


# ---------------------------------------------------------------------------
# exponential smoothing


def exp_smoothing_scores(series: NodeDataset, cfg: ExpConfig) -> ScoreSeries:
    """Score a (scaled) series by deviation from its exponential estimate.

    Within each gap-free segment the estimate starts at the first actual
    value, and the prediction for time t is the estimate built from values
    through t-1 only. Raw errors (summed per-feature absolute deviations)
    are normalized by the maximum error over the whole scored series; the
    first point of every segment scores 0.
    """
    if len(series) == 0:
        return ScoreSeries(
            node_id=series.node_id,
            bucket_starts=np.empty(0, dtype=np.int64),
            probabilities=np.empty(0),
            labels=np.empty(0, dtype=np.int64),
        )
    buckets, labels, errors = [], [], []
    for seg in time_consistency_segments(series):
        estimate = seg.features[0].copy()
        for t in range(len(seg)):
            if t == 0:
                errors.append(0.0)
            else:
                row = seg.features[t]
                errors.append(float(np.abs(estimate - row).sum()))
                estimate = cfg.alpha * row + (1.0 - cfg.alpha) * estimate
            buckets.append(int(seg.bucket_starts[t]))
            labels.append(int(seg.labels[t]))
    raw = np.array(errors)
    peak = raw.max()
    normalized = raw / peak if peak > 0 else raw
    probs = np.array([anomaly_probability(v) for v in normalized])
    order = np.argsort(buckets)
    return ScoreSeries(
        node_id=series.node_id,
        bucket_starts=np.array(buckets, dtype=np.int64)[order],
        probabilities=probs[order],
        labels=np.array(labels, dtype=np.int64)[order],
    )


# ---------------------------------------------------------------------------
# clustering


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between row sets a (M, N) and b (K, N)."""
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def silhouette(data: np.ndarray, assignment: np.ndarray) -> float:
    """Mean silhouette value (b - a) / max(a, b) under Euclidean distance.

    Requires at least two non-empty clusters. Samples alone in their cluster
    contribute 0, and a degenerate 0/0 (all distances zero) counts as 0.
    """
    data = np.asarray(data, dtype=np.float64)
    assignment = np.asarray(assignment)
    cluster_ids = np.unique(assignment)
    if len(cluster_ids) < 2:
        raise DataError("silhouette needs at least two non-empty clusters")
    dist = _pairwise_distances(data, data)
    scores = np.zeros(len(data))
    members = {cid: np.flatnonzero(assignment == cid) for cid in cluster_ids}
    for i in range(len(data)):
        own = members[assignment[i]]
        if len(own) == 1:
            continue  # singleton convention: s = 0
        a = dist[i, own].sum() / (len(own) - 1)
        b = min(
            dist[i, members[cid]].mean() for cid in cluster_ids if cid != assignment[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def assign_clusters(rows: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of each row's nearest centroid; ties go to the lowest id."""
    return np.argmin(_pairwise_distances(rows, centroids), axis=1)


def _plus_plus_seeds(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centroids by squared distance."""
    centroids = np.empty((k, rows.shape[1]))
    centroids[0] = rows[rng.integers(len(rows))]
    closest_sq = np.sum((rows - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest_sq.sum()
        if total == 0:
            centroids[j] = rows[rng.integers(len(rows))]
        else:
            centroids[j] = rows[rng.choice(len(rows), p=closest_sq / total)]
        closest_sq = np.minimum(closest_sq, np.sum((rows - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(
    rows: np.ndarray, seeds: np.ndarray, max_iter: int = KMEANS_MAX_ITER
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    centroids = seeds.copy()
    assignment = assign_clusters(rows, centroids)
    wcss_history: list[float] = []
    for _ in range(max_iter):
        for j in range(len(centroids)):
            mask = assignment == j
            if np.any(mask):
                centroids[j] = rows[mask].mean(axis=0)
            else:
                # re-seed an empty cluster on the worst-fit point
                far = np.argmax(
                    np.sum((rows - centroids[assignment]) ** 2, axis=1)
                )
                centroids[j] = rows[far]
        new_assignment = assign_clusters(rows, centroids)
        wcss_history.append(
            float(np.sum((rows - centroids[new_assignment]) ** 2))
        )
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    wcss = float(np.sum((rows - centroids[assignment]) ** 2))
    return centroids, assignment, wcss, wcss_history


def kmeans_fit(rows: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Best-of-10-restarts Lloyd clustering, deterministic under the seed."""
    rows = np.asarray(rows, dtype=np.float64)
    distinct = len(np.unique(rows, axis=0))
    if k < 1:
        raise DataError(f"k must be positive, got {k}")
    if k > distinct:
        raise DataError(f"k={k} exceeds the {distinct} distinct rows available")
    rng = np.random.default_rng(seed)
    best: tuple[float, np.ndarray] | None = None
    for _ in range(KMEANS_RESTARTS):
        seeds = _plus_plus_seeds(rows, k, rng)
        centroids, _, wcss, _ = _lloyd(rows, seeds)
        if best is None or wcss < best[0]:
            best = (wcss, centroids)
    return best[1]


def select_k(rows: np.ndarray, k_range=DEFAULT_K_RANGE, seed: int = 0) -> int:
    """Pick the cluster count with the highest training silhouette.

    Ties break toward the smaller k. The silhouette is computed on a seeded
    uniform subsample capped at 2000 rows to keep the pairwise-distance
    matrix tractable.
    """
    rows = np.asarray(rows, dtype=np.float64)
    distinct = len(np.unique(rows, axis=0))
    feasible = [k for k in k_range if 2 <= k <= distinct]
    if not feasible:
        raise DataError(
            f"no feasible k in {list(k_range)} for {distinct} distinct rows"
        )
    rng = np.random.default_rng(seed)
    if len(rows) > SILHOUETTE_SAMPLE_CAP:
        sample_idx = np.sort(
            rng.choice(len(rows), size=SILHOUETTE_SAMPLE_CAP, replace=False)
        )
    else:
        sample_idx = np.arange(len(rows))

    best_k, best_score = None, -np.inf
    for k in feasible:
        centroids = kmeans_fit(rows, k, seed=seed)
        assignment = assign_clusters(rows[sample_idx], centroids)
        if len(np.unique(assignment)) < 2:
            continue
        score = silhouette(rows[sample_idx], assignment)
        if score > best_score:
            best_k, best_score = k, score
    if best_k is None:
        raise DataError("silhouette was undefined for every candidate k")
    return best_k


def cluster_anomaly_probabilities(
    assignments: np.ndarray, labels: np.ndarray, k: int
) -> np.ndarray:
    """Fraction of anomalous (label 1) members per cluster; empty -> 0."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    if assignments.shape != labels.shape:
        raise DataError("assignments and labels must align")
    probs = np.zeros(k)
    for j in range(k):
        mask = assignments == j
        if np.any(mask):
            probs[j] = labels[mask].mean()
    return probs


def kmeans_score(model: KMeansModel, rows: np.ndarray) -> np.ndarray:
    """Anomaly probability of each row's nearest centroid (ties: lowest id)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != model.centroids.shape[1]:
        raise DataError(
            f"rows have {rows.shape[1]} features, model expects "
            f"{model.centroids.shape[1]}"
        )
    return model.cluster_anomaly_prob[assign_clusters(rows, model.centroids)]


# ---------------------------------------------------------------------------
# dummy


def dummy_scores(n: int, seed: int) -> np.ndarray:
    """n independent uniform [0, 1] scores, reproducible from the seed."""
    if n < 0:
        raise DataError(f"n must be >= 0, got {n}")
    return np.random.default_rng(seed).random(n)
