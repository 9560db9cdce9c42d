"""Command-line driver: generate data, train the method matrix, score, and
evaluate pooled ROC reports.

Every subcommand takes ``--config <json>`` and ``--out <dir>``. Outputs are
machine-readable (JSON / CSV); determinism is guaranteed by a master seed
from which every (node, method, window) job derives its own stream.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import models as mdl
from .errors import ConfigError, DataError, TrainingError
from .neuralnet import TrainingConfig
from .pipeline import chronological_split
from .scoring import pool_nodes, read_scores_csv, write_scores_csv
from .synthgen import SynthConfig, generate_dataset
from .telemetry import NodeDataset
from .util import derive_seed, read_json, write_json

log = logging.getLogger("nodewatch")

DEFAULT_WINDOWS = [5, 10, 20, 40]


@dataclass
class RunConfig:
    """Configuration for the train / score / evaluate subcommands."""

    data_dir: str
    nodes: list[str] | None = None
    methods: list[str] = field(default_factory=lambda: list(mdl.METHODS))
    windows: list[int] = field(default_factory=lambda: list(DEFAULT_WINDOWS))
    split_ratio: float = 0.8
    training: dict = field(default_factory=dict)
    exp_alpha: float = 0.1
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        unknown = [m for m in self.methods if m not in mdl.METHODS]
        if unknown:
            raise ConfigError(
                f"unknown methods {unknown}; valid names: {list(mdl.METHODS)}"
            )
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods list contains duplicates")
        if not self.methods:
            raise ConfigError("methods list is empty")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if any(w < 1 for w in self.windows):
            raise ConfigError(f"window lengths must be >= 1, got {self.windows}")
        needs_windows = any(m in mdl.WINDOWED_METHODS for m in self.methods)
        if needs_windows and not self.windows:
            raise ConfigError("windowed methods requested but windows list is empty")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        allowed_training = {
            "learning_rate",
            "batch_size",
            "max_epochs",
            "early_stop_patience",
        }
        bad = set(self.training) - allowed_training
        if bad:
            raise ConfigError(f"unknown training keys: {sorted(bad)}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        raw = read_json(path)
        known = {
            "data_dir",
            "nodes",
            "methods",
            "windows",
            "split_ratio",
            "training",
            "exp_alpha",
            "seed",
            "workers",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        if "data_dir" not in raw:
            raise ConfigError(f"{path}: 'data_dir' is required")
        return cls(**raw)

    def method_instances(self) -> list[tuple[str, int | None]]:
        """Expand windowed methods over the configured window lengths."""
        instances: list[tuple[str, int | None]] = []
        for method in self.methods:
            if method in mdl.WINDOWED_METHODS:
                instances.extend((method, w) for w in self.windows)
            else:
                instances.append((method, None))
        return instances

    def training_config(self, seed: int) -> TrainingConfig:
        return TrainingConfig(seed=seed, **self.training)


def _discover_nodes(cfg: RunConfig) -> list[str]:
    data_dir = Path(cfg.data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory {data_dir} does not exist")
    if cfg.nodes:
        missing = [n for n in cfg.nodes if not (data_dir / f"{n}.csv").exists()]
        if missing:
            raise DataError(f"node datasets not found: {missing}")
        return sorted(cfg.nodes)
    nodes = sorted(p.stem for p in data_dir.glob("*.csv"))
    if not nodes:
        raise DataError(f"no node CSV files found in {data_dir}")
    return nodes


def _load_dataset(cfg: RunConfig, node_id: str) -> NodeDataset:
    return NodeDataset.from_csv(Path(cfg.data_dir) / f"{node_id}.csv", node_id=node_id)


# ---------------------------------------------------------------------------
# train


def _write_loss_history(path: Path, history: list[float]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(history):
            fh.write(f"{epoch},{loss!r}\n")


def _run_train_job(args: tuple) -> tuple[str, str, str, str]:
    """Train one (node, method instance); returns a status row."""
    cfg, out_dir, node_id, method, window = args
    name = mdl.method_instance_name(method, window)
    store = Path(out_dir) / "models"
    seed = derive_seed(cfg.seed, node_id, name)
    try:
        dataset = _load_dataset(cfg, node_id)
        if method == "CLU":
            model = mdl.train_clu_model(dataset, cfg.split_ratio, seed=seed)
            mdl.save_cluster_model(store, name, model)
        else:
            kind = "dense" if method.startswith("DENSE") else "ruad"
            spec = mdl.ModelSpec(
                kind=kind, input_dim=dataset.feature_count, window=window or 1
            )
            trained, history = mdl.train_node_model(
                dataset,
                spec,
                mdl.REGIMES[method],
                cfg.training_config(seed),
                split_ratio=cfg.split_ratio,
            )
            mdl.save_trained_model(store, name, trained)
            _write_loss_history(store / node_id / f"{name}_loss.csv", history)
    except DataError as exc:
        return (node_id, name, "skipped-data", str(exc))
    return (node_id, name, "trained", "")


def cmd_train(cfg: RunConfig, out_dir: Path) -> None:
    nodes = _discover_nodes(cfg)
    store = out_dir / "models"
    rows: list[tuple[str, str, str, str]] = []
    jobs = []
    for method, window in cfg.method_instances():
        name = mdl.method_instance_name(method, window)
        if method == "EXP":
            log.info("%s requires no training; skipping", name)
            continue
        for node_id in nodes:
            if mdl.model_path(store, node_id, name).exists():
                rows.append((node_id, name, "skipped-exists", ""))
                continue
            jobs.append((cfg, str(out_dir), node_id, method, window))

    log.info("training %d jobs across %d nodes", len(jobs), len(nodes))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows.extend(pool.map(_run_train_job, jobs))
    else:
        rows.extend(_run_train_job(job) for job in jobs)

    for node_id, name, status, detail in sorted(rows):
        if status == "skipped-data":
            log.warning("%s/%s skipped: %s", node_id, name, detail)
    write_json(
        out_dir / "train_log.json",
        {
            "config": {
                "data_dir": cfg.data_dir,
                "methods": cfg.methods,
                "windows": cfg.windows,
                "split_ratio": cfg.split_ratio,
                "training": cfg.training,
                "seed": cfg.seed,
            },
            "jobs": [
                {"node": n, "model": m, "status": s, "detail": d}
                for n, m, s, d in sorted(rows)
            ],
        },
    )


# ---------------------------------------------------------------------------
# score / evaluate


def _score_method(
    cfg: RunConfig, out_dir: Path, method: str, window: int | None, nodes: list[str]
):
    """Per-node score series for one method instance; skips nodes without
    a stored model (they were skipped at training time)."""
    name = mdl.method_instance_name(method, window)
    store = out_dir / "models"
    series_list = []
    for node_id in nodes:
        if method == "EXP":
            try:
                dataset = _load_dataset(cfg, node_id)
                series = mdl.score_exp_method(dataset, cfg.split_ratio, cfg.exp_alpha)
            except DataError as exc:
                log.warning("EXP: skipping %s: %s", node_id, exc)
                continue
        else:
            path = mdl.model_path(store, node_id, name)
            if not path.exists():
                log.warning("%s: no model for %s; skipping", name, node_id)
                continue
            dataset = _load_dataset(cfg, node_id)
            test = chronological_split(dataset, cfg.split_ratio).test
            if method == "CLU":
                series = mdl.score_clu_model(mdl.load_cluster_model(path), test)
            else:
                series = mdl.score_node_model(mdl.load_trained_model(path), test)
        if len(series):
            series_list.append(series)
    if not series_list:
        raise DataError(f"{name}: no node produced any scores")
    return series_list


def _load_or_compute_scores(
    cfg: RunConfig, out_dir: Path, method: str, window: int | None, nodes: list[str]
):
    name = mdl.method_instance_name(method, window)
    score_path = out_dir / "scores" / f"{name}.csv"
    if score_path.exists():
        return read_scores_csv(score_path)
    series_list = _score_method(cfg, out_dir, method, window, nodes)
    write_scores_csv(score_path, series_list)
    return series_list


def cmd_score(cfg: RunConfig, out_dir: Path) -> None:
    nodes = _discover_nodes(cfg)
    for method, window in cfg.method_instances():
        series_list = _load_or_compute_scores(cfg, out_dir, method, window, nodes)
        log.info(
            "%s: scored %d nodes, %d points",
            mdl.method_instance_name(method, window),
            len(series_list),
            sum(len(s) for s in series_list),
        )


def cmd_evaluate(cfg: RunConfig, out_dir: Path) -> None:
    nodes = _discover_nodes(cfg)
    summary: dict[str, dict] = {}
    for method, window in cfg.method_instances():
        name = mdl.method_instance_name(method, window)
        try:
            series_list = _load_or_compute_scores(cfg, out_dir, method, window, nodes)
            report = pool_nodes(series_list)
        except DataError as exc:
            log.error("%s: %s", name, exc)
            summary[name] = {"error": str(exc)}
            continue
        write_json(out_dir / "reports" / f"{name}_roc.json", report.to_dict())
        report.write_points_csv(out_dir / "reports" / f"{name}_roc.csv")
        summary[name] = {
            "auc": report.auc,
            "positives": report.positives,
            "negatives": report.negatives,
            "nodes_scored": len(series_list),
        }
        log.info("%s: AUC %.4f over %d nodes", name, report.auc, len(series_list))
    write_json(out_dir / "summary.json", summary)


def cmd_generate(config_path: Path, out_dir: Path) -> None:
    raw = read_json(config_path)
    try:
        cfg = SynthConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    generate_dataset(cfg, out_dir)
    log.info(
        "generated %d nodes x %d buckets into %s",
        cfg.node_count,
        cfg.timestep_count,
        out_dir,
    )


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodewatch",
        description="Per-node HPC telemetry anomaly detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ("generate", "train", "score", "evaluate"):
        p = sub.add_parser(command)
        p.add_argument("--config", required=True, type=Path, help="JSON config file")
        p.add_argument("--out", required=True, type=Path, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            cmd_generate(args.config, args.out)
        else:
            cfg = RunConfig.from_file(args.config)
            args.out.mkdir(parents=True, exist_ok=True)
            if args.command == "train":
                cmd_train(cfg, args.out)
            elif args.command == "score":
                cmd_score(cfg, args.out)
            else:
                cmd_evaluate(cfg, args.out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 1
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return 2
    except DataError as exc:
        log.error("data error: %s", exc)
        return 2
    except TrainingError as exc:
        log.error("training failed: %s", exc)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
