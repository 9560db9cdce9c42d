"""Detector construction and per-node orchestration.

Ties the pipeline, the network engine and the baselines together: builds
the two autoencoder architectures at their published shapes, trains them
under the semi-supervised / time-consistency regime matrix, and turns a
trained model plus a test set into a per-bucket score series. Also owns the
on-disk model store (one JSON per node and method).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neuralnet as nn
from .baselines import (
    DEFAULT_K_RANGE,
    ExpConfig,
    KMeansModel,
    assign_clusters,
    cluster_anomaly_probabilities,
    exp_smoothing_scores,
    kmeans_fit,
    kmeans_score,
    select_k,
)
from .errors import DataError
from .pipeline import (
    ScalerParams,
    apply_minmax,
    chronological_split,
    fit_minmax,
    make_windows,
    semi_supervised_filter,
    time_consistency_segments,
)
from .scoring import MAX_ERROR_FLOOR, ScoreSeries, anomaly_probability
from .telemetry import NodeDataset
from .util import read_json, write_json

log = logging.getLogger(__name__)

ENCODER_DIM = 16
LATENT_DIM = 8
DECODER_DIM = 16

METHODS = ("EXP", "CLU", "DENSE_semi", "DENSE_un", "RUAD_semi", "RUAD")
WINDOWED_METHODS = ("RUAD_semi", "RUAD")

SCORE_BATCH = 512


@dataclass(frozen=True)
class Regime:
    """Which optional preprocessing filters a method trains under."""

    semi_supervised: bool
    time_consistency: bool

    def to_dict(self) -> dict:
        return {
            "semi_supervised": self.semi_supervised,
            "time_consistency": self.time_consistency,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Regime":
        return cls(d["semi_supervised"], d["time_consistency"])


# Filter matrix per method: (semi-supervised, time consistency).
REGIMES: dict[str, Regime] = {
    "EXP": Regime(semi_supervised=False, time_consistency=True),
    "CLU": Regime(semi_supervised=False, time_consistency=False),
    "DENSE_semi": Regime(semi_supervised=True, time_consistency=False),
    "DENSE_un": Regime(semi_supervised=False, time_consistency=False),
    "RUAD_semi": Regime(semi_supervised=True, time_consistency=True),
    "RUAD": Regime(semi_supervised=False, time_consistency=True),
}


def method_instance_name(method: str, window: int | None = None) -> str:
    """Concrete store/report name; windowed methods get a W suffix."""
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in WINDOWED_METHODS:
        if window is None:
            raise DataError(f"{method} requires a window length")
        return f"{method}_W{window}"
    return method


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor for the two autoencoder families.

    ``dense`` reconstructs one row (window 1); ``ruad`` encodes a window of
    rows through two LSTM layers and reconstructs the final row.
    """

    kind: str  # "dense" | "ruad"
    input_dim: int
    window: int = 1
    encoder_dim: int = ENCODER_DIM
    latent_dim: int = LATENT_DIM
    decoder_dim: int = DECODER_DIM

    def __post_init__(self) -> None:
        if self.kind not in ("dense", "ruad"):
            raise DataError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise DataError("input_dim must be >= 1")
        if self.window < 1:
            raise DataError("window must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "window": self.window,
            "encoder_dim": self.encoder_dim,
            "latent_dim": self.latent_dim,
            "decoder_dim": self.decoder_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def build_model(spec: ModelSpec, seed: int) -> nn.NetworkParams:
    """Instantiate the architecture with seeded Glorot initialization."""
    n = spec.input_dim
    if spec.kind == "dense":
        layer_specs = [
            nn.DenseSpec(n, spec.encoder_dim, "relu"),
            nn.DenseSpec(spec.encoder_dim, spec.latent_dim, "relu"),
            nn.DenseSpec(spec.latent_dim, spec.decoder_dim, "relu"),
            nn.DenseSpec(spec.decoder_dim, n, "sigmoid"),
        ]
    else:
        layer_specs = [
            nn.LstmSpec(n, spec.encoder_dim, return_sequence=True),
            nn.LstmSpec(spec.encoder_dim, spec.latent_dim, return_sequence=False),
            nn.DenseSpec(spec.latent_dim, spec.decoder_dim, "relu"),
            nn.DenseSpec(spec.decoder_dim, n, "sigmoid"),
        ]
    return nn.init_params(layer_specs, seed)


@dataclass
class TrainedModel:
    """A trained autoencoder plus everything needed to score new data."""

    node_id: str
    spec: ModelSpec
    network: nn.NetworkParams
    scaler: ScalerParams
    max_train_error: float
    regime: Regime
    seed: int
    training: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not np.isfinite(self.max_train_error) or self.max_train_error <= 0:
            raise DataError("max_train_error must be finite and > 0")


def reconstruction_errors(params: nn.NetworkParams, windows) -> np.ndarray:
    """Per-window L1 error between reconstruction and target, batched."""
    errors = np.empty(len(windows))
    for lo in range(0, len(windows), SCORE_BATCH):
        hi = min(lo + SCORE_BATCH, len(windows))
        out, _ = nn.forward(params, windows.sequences[lo:hi])
        errors[lo:hi] = np.abs(out - windows.targets[lo:hi]).sum(axis=1)
    return errors


def _train_windows(dataset: NodeDataset, window: int, scaler: ScalerParams):
    """Scale, segment and window a training set; explain an empty result."""
    scaled = apply_minmax(scaler, dataset)
    windows = make_windows(time_consistency_segments(scaled), window)
    if len(windows) == 0:
        raise DataError(
            f"{dataset.node_id}: no training windows survive time-consistency "
            f"filtering with W={window} ({len(dataset)} rows available)"
        )
    return windows


def train_node_model(
    dataset: NodeDataset,
    spec: ModelSpec,
    regime: Regime,
    cfg: nn.TrainingConfig,
    split_ratio: float = 0.8,
) -> tuple[TrainedModel, list[float]]:
    """Full training pipeline for one node and one autoencoder variant.

    Chronological split, optional semi-supervised filter, min/max scaling
    fitted on the (filtered) training rows, time-consistent windowing, then
    mini-batch training. The stored ``max_train_error`` is the largest L1
    reconstruction error over the training windows actually used.
    """
    split = chronological_split(dataset, split_ratio)
    train = split.train
    if regime.semi_supervised:
        try:
            train = semi_supervised_filter(train)
        except DataError as exc:
            raise DataError(f"semi-supervised filter emptied the training set: {exc}") from exc
    scaler = fit_minmax(train)
    window = spec.window if spec.kind == "ruad" else 1
    windows = _train_windows(train, window, scaler)

    network = build_model(spec, cfg.seed)
    network, history = nn.train_autoencoder(network, windows, cfg)

    max_error = float(reconstruction_errors(network, windows).max())
    model = TrainedModel(
        node_id=dataset.node_id,
        spec=spec,
        network=network,
        scaler=scaler,
        max_train_error=max(max_error, MAX_ERROR_FLOOR),
        regime=regime,
        seed=cfg.seed,
        training=cfg.to_dict(),
    )
    return model, history


def score_node_model(model: TrainedModel, test: NodeDataset) -> ScoreSeries:
    """Score a test set with a trained autoencoder.

    The stored scaler is applied as-is, windows are cut from gap-free
    segments only, and each window's target timestep receives the clamped
    normalized reconstruction error. Labels pass through untouched; they
    never influence the probabilities.
    """
    if test.feature_count != model.spec.input_dim:
        raise DataError(
            f"test set has {test.feature_count} features, model expects "
            f"{model.spec.input_dim}"
        )
    window = model.spec.window if model.spec.kind == "ruad" else 1
    scaled = apply_minmax(model.scaler, test)
    windows = make_windows(time_consistency_segments(scaled), window)
    if len(windows) == 0:
        log.warning(
            "%s: no scoreable windows (need >= %d consecutive buckets)",
            test.node_id,
            window,
        )
        return ScoreSeries(
            node_id=test.node_id,
            bucket_starts=np.empty(0, dtype=np.int64),
            probabilities=np.empty(0),
            labels=np.empty(0, dtype=np.int64),
        )
    errors = reconstruction_errors(model.network, windows)
    probs = np.array(
        [anomaly_probability(e / model.max_train_error) for e in errors]
    )
    return ScoreSeries(
        node_id=test.node_id,
        bucket_starts=windows.target_bucket_starts,
        probabilities=probs,
        labels=windows.target_labels,
    )


# ---------------------------------------------------------------------------
# baseline runners (same split/scale pipeline, no neural network)


@dataclass
class ClusterModel:
    """K-means detector bundle: scaler, centroids and per-cluster rates."""

    node_id: str
    scaler: ScalerParams
    kmeans: KMeansModel
    seed: int


def train_clu_model(
    dataset: NodeDataset,
    split_ratio: float = 0.8,
    seed: int = 0,
    k_range=DEFAULT_K_RANGE,
) -> ClusterModel:
    """Fit k-means on scaled training rows and attach label-derived rates.

    This is the one detector whose training consumes labels even in the
    unsupervised regime: cluster anomaly probabilities cannot be derived
    from geometry alone.
    """
    split = chronological_split(dataset, split_ratio)
    scaler = fit_minmax(split.train)
    rows = apply_minmax(scaler, split.train).features
    k = select_k(rows, k_range=k_range, seed=seed)
    centroids = kmeans_fit(rows, k, seed=seed)
    assignments = assign_clusters(rows, centroids)
    probs = cluster_anomaly_probabilities(assignments, split.train.labels, k)
    return ClusterModel(
        node_id=dataset.node_id,
        scaler=scaler,
        kmeans=KMeansModel(
            k=k, centroids=centroids, cluster_anomaly_prob=probs, seed=seed
        ),
        seed=seed,
    )


def score_clu_model(model: ClusterModel, test: NodeDataset) -> ScoreSeries:
    scaled = apply_minmax(model.scaler, test)
    return ScoreSeries(
        node_id=test.node_id,
        bucket_starts=test.bucket_starts,
        probabilities=kmeans_score(model.kmeans, scaled.features),
        labels=test.labels,
    )


def score_exp_method(
    dataset: NodeDataset, split_ratio: float = 0.8, alpha: float = 0.1
) -> ScoreSeries:
    """Training-free smoothing baseline over the test split.

    The scaler is still fitted on the training split (scaling is part of the
    shared pipeline), but no model state is learned or stored.
    """
    split = chronological_split(dataset, split_ratio)
    scaler = fit_minmax(split.train)
    return exp_smoothing_scores(apply_minmax(scaler, split.test), ExpConfig(alpha))


# ---------------------------------------------------------------------------
# model store


def model_path(store_dir: str | Path, node_id: str, name: str) -> Path:
    return Path(store_dir) / node_id / f"{name}.json"


def save_trained_model(store_dir: str | Path, name: str, model: TrainedModel) -> Path:
    path = model_path(store_dir, model.node_id, name)
    write_json(
        path,
        {
            "kind": model.spec.kind,
            "name": name,
            "node_id": model.node_id,
            "model_spec": model.spec.to_dict(),
            "regime": model.regime.to_dict(),
            "seed": model.seed,
            "max_train_error": model.max_train_error,
            "scaler": model.scaler.to_dict(),
            "network": model.network.to_dict(),
            "training": model.training,
        },
    )
    return path


def load_trained_model(path: str | Path) -> TrainedModel:
    d = read_json(path)
    return TrainedModel(
        node_id=d["node_id"],
        spec=ModelSpec.from_dict(d["model_spec"]),
        network=nn.NetworkParams.from_dict(d["network"]),
        scaler=ScalerParams.from_dict(d["scaler"]),
        max_train_error=d["max_train_error"],
        regime=Regime.from_dict(d["regime"]),
        seed=d["seed"],
        training=d.get("training", {}),
    )


def save_cluster_model(store_dir: str | Path, name: str, model: ClusterModel) -> Path:
    path = model_path(store_dir, model.node_id, name)
    write_json(
        path,
        {
            "kind": "clu",
            "name": name,
            "node_id": model.node_id,
            "seed": model.seed,
            "scaler": model.scaler.to_dict(),
            "kmeans": model.kmeans.to_dict(),
        },
    )
    return path


def load_cluster_model(path: str | Path) -> ClusterModel:
    d = read_json(path)
    return ClusterModel(
        node_id=d["node_id"],
        scaler=ScalerParams.from_dict(d["scaler"]),
        kmeans=KMeansModel.from_dict(d["kmeans"]),
        seed=d["seed"],
    )
