"""Synthetic per-node telemetry with ground-truth anomaly labels.

Baseline signals mimic aggregated node telemetry: metrics are grouped, each
group follows a workload factor built from a regime-switching mean (seeded
Markov chain), a multi-hour oscillation and a daily cycle, plus per-metric
noise; every metric is expanded into the (min, max, avg, var) bucket columns.

Three anomaly signatures separate the capabilities of the detector families:

* ``level_shift`` — additive offset on a fixed metric subset; visible to
  anything that models value ranges, and to jump detectors at its onset.
* ``correlation_break`` — half of one metric group replays its own past,
  staying smooth and in-range per feature while disagreeing with the metrics
  it normally co-varies with.
* ``temporal_disruption`` — rows are replaced by i.i.d. draws from the
  recent past: per-feature marginals are preserved (time-unaware detectors
  see nothing) while the temporal structure is destroyed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .telemetry import BUCKET_SECONDS, NodeDataset, feature_names_for
from .util import derive_seed, write_json

SIGNATURE_KINDS = ("level_shift", "correlation_break", "temporal_disruption")

DISRUPTION_POOL = 192  # two days of buckets feeding the i.i.d. shuffle
PLACEMENT_MARGIN = 4  # buckets kept clear between injected intervals
MIN_DURATION = 4
MAX_DURATION = 12
DAILY_PERIOD = 96


@dataclass
class SynthConfig:
    node_count: int = 8
    metric_count: int = 16
    timestep_count: int = 6000
    anomaly_rate: float = 0.01
    anomaly_mix: dict[str, float] = field(
        default_factory=lambda: {
            "level_shift": 0.2,
            "correlation_break": 0.2,
            "temporal_disruption": 0.6,
        }
    )
    regime_count: int = 3
    noise_std: float = 0.1
    seed: int = 20240817

    def __post_init__(self) -> None:
        if min(self.node_count, self.metric_count, self.timestep_count) < 1:
            raise ConfigError("node, metric and timestep counts must be positive")
        if self.regime_count < 1:
            raise ConfigError("regime_count must be positive")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ConfigError(f"anomaly_rate must lie in [0, 1), got {self.anomaly_rate}")
        if self.noise_std <= 0:
            raise ConfigError("noise_std must be positive")
        unknown = set(self.anomaly_mix) - set(SIGNATURE_KINDS)
        if unknown:
            raise ConfigError(f"unknown anomaly kinds in mix: {sorted(unknown)}")
        if self.anomaly_rate > 0:
            total = sum(self.anomaly_mix.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"anomaly_mix weights must sum to 1, got {total}")
            if any(w < 0 for w in self.anomaly_mix.values()):
                raise ConfigError("anomaly_mix weights must be non-negative")

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "metric_count": self.metric_count,
            "timestep_count": self.timestep_count,
            "anomaly_rate": self.anomaly_rate,
            "anomaly_mix": dict(self.anomaly_mix),
            "regime_count": self.regime_count,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


@dataclass(frozen=True)
class AnomalySignature:
    """One injected fault: what it does, where, how hard, for how long.

    ``magnitude`` is kind-specific: the additive offset for level shifts,
    the replay distance in buckets for correlation breaks, and the sampling
    pool length in buckets for temporal disruptions.
    """

    kind: str
    metrics: tuple[int, ...]
    magnitude: float
    duration: int

    def __post_init__(self) -> None:
        if self.kind not in SIGNATURE_KINDS:
            raise DataError(f"unknown signature kind {self.kind!r}")
        if self.duration < 1:
            raise DataError("signature duration must be >= 1")
        if self.magnitude <= 0:
            raise DataError("signature magnitude must be > 0")
        if not self.metrics:
            raise DataError("signature must affect at least one metric")


@dataclass(frozen=True)
class InjectedAnomaly:
    start: int  # bucket index, inclusive
    end: int  # bucket index, exclusive
    signature: AnomalySignature

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "kind": self.signature.kind,
            "metrics": [int(m) for m in self.signature.metrics],
            "magnitude": self.signature.magnitude,
        }


def _metric_columns(metric: int) -> slice:
    return slice(4 * metric, 4 * metric + 4)


def inject_anomaly(
    features: np.ndarray,
    signature: AnomalySignature,
    interval: tuple[int, int],
    source: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Apply one signature to rows [start, end) of an aggregate matrix.

    Returns a modified copy; rows outside the interval are untouched.
    ``source`` provides the pristine rows that correlation breaks and
    temporal disruptions draw from (defaults to ``features`` itself).
    """
    start, end = interval
    total = features.shape[0]
    if not 0 <= start < end <= total:
        raise DataError(f"interval [{start}, {end}) outside series of length {total}")
    if source is None:
        source = features
    if source.shape != features.shape:
        raise DataError("source matrix must match the feature matrix shape")

    out = features.copy()
    if signature.kind == "level_shift":
        for m in signature.metrics:
            cols = _metric_columns(m)
            out[start:end, cols.start : cols.start + 3] += signature.magnitude
    elif signature.kind == "correlation_break":
        shift = int(signature.magnitude)
        if start - shift < 0:
            raise DataError(
                f"correlation break needs {shift} buckets of history before {start}"
            )
        for m in signature.metrics:
            cols = _metric_columns(m)
            out[start:end, cols] = source[start - shift : end - shift, cols]
    else:  # temporal_disruption
        pool = int(signature.magnitude)
        if start - pool < 0:
            raise DataError(
                f"temporal disruption needs {pool} buckets of history before {start}"
            )
        if rng is None:
            raise DataError("temporal disruption requires a random generator")
        picks = rng.integers(start - pool, start, size=end - start)
        for m in signature.metrics:
            cols = _metric_columns(m)
            out[start:end, cols] = source[picks][:, cols]
    return out


def _regime_path(
    rng: np.random.Generator, steps: int, regimes: int, switch_prob: float = 0.015
) -> np.ndarray:
    path = np.empty(steps, dtype=np.int64)
    current = int(rng.integers(regimes))
    draws = rng.random(steps)
    for t in range(steps):
        if draws[t] < switch_prob and regimes > 1:
            hop = int(rng.integers(regimes - 1))
            current = hop if hop < current else hop + 1
        path[t] = current
    return path


def _place_intervals(
    rng: np.random.Generator, cfg: SynthConfig
) -> list[tuple[int, int]]:
    """Disjoint anomaly intervals totalling round(rate * T) buckets."""
    steps = cfg.timestep_count
    target = int(round(cfg.anomaly_rate * steps))
    if target == 0:
        return []
    min_start = DISRUPTION_POOL + 1
    if min_start + MIN_DURATION >= steps:
        raise DataError("series too short to place anomalies after the warm-up day")

    durations: list[int] = []
    remaining = target
    while remaining > 0:
        d = int(rng.integers(MIN_DURATION, MAX_DURATION + 1))
        d = min(d, remaining)
        durations.append(d)
        remaining -= d

    placed: list[tuple[int, int]] = []
    for d in durations:
        ok = False
        for _ in range(1000):
            start = int(rng.integers(min_start, steps - d + 1))
            end = start + d
            if all(
                end + PLACEMENT_MARGIN <= s or e + PLACEMENT_MARGIN <= start
                for s, e in placed
            ):
                placed.append((start, end))
                ok = True
                break
        if not ok:
            raise DataError(
                f"anomaly_rate {cfg.anomaly_rate} too high to place disjoint "
                f"intervals in {steps} buckets"
            )
    return sorted(placed)


def generate_node(
    cfg: SynthConfig, node_seed: int, node_id: str
) -> tuple[NodeDataset, list[InjectedAnomaly]]:
    """Generate one node's aggregated telemetry and ground-truth labels.

    Deterministic per (cfg.seed, node_seed). Labels are 1 exactly on the
    injected buckets.
    """
    rng = np.random.default_rng(node_seed)
    steps, metric_count = cfg.timestep_count, cfg.metric_count
    group_count = max(1, min(4, metric_count // 2))

    # workload factors, one per metric group
    regimes = _regime_path(rng, steps, cfg.regime_count)
    t_axis = np.arange(steps)
    factors = np.empty((group_count, steps))
    load = np.empty((group_count, steps))
    for g in range(group_count):
        amp = rng.uniform(0.8, 1.2)
        period = rng.uniform(18.0, 36.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        daily_phase = rng.uniform(0.0, 2.0 * np.pi)
        means = rng.uniform(-0.35, 0.35, size=cfg.regime_count)
        factors[g] = (
            means[regimes]
            + amp * np.sin(2.0 * np.pi * t_axis / period + phase)
            + 0.35 * amp * np.sin(2.0 * np.pi * t_axis / DAILY_PERIOD + daily_phase)
        )
        span = factors[g].max() - factors[g].min()
        load[g] = (factors[g] - factors[g].min()) / (span if span > 0 else 1.0)

    # per-metric series expanded into bucket aggregates
    features = np.empty((steps, 4 * metric_count))
    for j in range(metric_count):
        g = j % group_count
        scale = rng.uniform(0.6, 1.6)
        base = rng.uniform(2.0, 20.0)
        noise = rng.normal(0.0, cfg.noise_std, size=steps)
        avg = base + scale * (factors[g] + noise)
        spread = scale * cfg.noise_std * (
            0.4 + 0.4 * rng.random(steps) + 0.6 * load[g]
        )
        cols = _metric_columns(j)
        features[:, cols.start + 0] = avg - spread * rng.uniform(0.8, 1.2, size=steps)
        features[:, cols.start + 1] = avg + spread * rng.uniform(0.8, 1.2, size=steps)
        features[:, cols.start + 2] = avg
        features[:, cols.start + 3] = spread**2

    # fault injection
    intervals = _place_intervals(rng, cfg)
    kinds = list(cfg.anomaly_mix.keys())
    weights = np.array([cfg.anomaly_mix[k] for k in kinds])
    shift_subset_size = int(rng.integers(max(1, metric_count // 4), max(2, metric_count // 2) + 1))
    shift_subset = tuple(
        sorted(int(j) for j in rng.choice(metric_count, size=shift_subset_size, replace=False))
    )

    labels = np.zeros(steps, dtype=np.int64)
    pristine = features.copy()
    injected: list[InjectedAnomaly] = []
    for start, end in intervals:
        kind = kinds[int(rng.choice(len(kinds), p=weights / weights.sum()))]
        if kind == "level_shift":
            signature = AnomalySignature(
                kind=kind,
                metrics=shift_subset,
                magnitude=float(rng.uniform(2.0, 4.0)),
                duration=end - start,
            )
        elif kind == "correlation_break":
            g = int(rng.integers(group_count))
            members = [j for j in range(metric_count) if j % group_count == g]
            half = max(1, len(members) // 2)
            chosen = tuple(
                sorted(int(j) for j in rng.choice(members, size=half, replace=False))
            )
            signature = AnomalySignature(
                kind=kind,
                metrics=chosen,
                magnitude=float(rng.integers(12, 37)),
                duration=end - start,
            )
        else:
            signature = AnomalySignature(
                kind=kind,
                metrics=tuple(range(metric_count)),
                magnitude=float(DISRUPTION_POOL),
                duration=end - start,
            )
        features = inject_anomaly(
            features, signature, (start, end), source=pristine, rng=rng
        )
        labels[start:end] = 1
        injected.append(InjectedAnomaly(start=start, end=end, signature=signature))

    metric_names = [f"m{j:02d}" for j in range(metric_count)]
    dataset = NodeDataset(
        node_id=node_id,
        bucket_starts=t_axis * BUCKET_SECONDS,
        features=features,
        labels=labels,
        feature_names=feature_names_for(metric_names),
    )
    return dataset, injected


def generate_dataset(cfg: SynthConfig, out_dir: str | Path) -> dict:
    """Generate every node, write per-node CSVs plus a manifest, return it."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"config": cfg.to_dict(), "nodes": {}}
    for i in range(cfg.node_count):
        node_id = f"node_{i:03d}"
        node_seed = derive_seed(cfg.seed, node_id)
        dataset, injected = generate_node(cfg, node_seed, node_id)
        path = out_dir / f"{node_id}.csv"
        dataset.to_csv(path)
        manifest["nodes"][node_id] = {
            "seed": node_seed,
            "file": path.name,
            "anomalies": [a.to_dict() for a in injected],
        }
    write_json(out_dir / "manifest.json", manifest)
    return manifest
