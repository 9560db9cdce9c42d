import json

import numpy as np
import pytest

from nodewatch.baselines import dummy_scores
from nodewatch.cli import RunConfig, main
from nodewatch.errors import ConfigError
from nodewatch.scoring import ScoreSeries, write_scores_csv
from nodewatch.util import write_json


def write_config(path, **kwargs):
    write_json(path, kwargs)
    return path


def tiny_synth_config(tmp_path, **overrides):
    cfg = dict(
        node_count=2,
        metric_count=4,
        timestep_count=400,
        anomaly_rate=0.02,
        seed=11,
    )
    cfg.update(overrides)
    return write_config(tmp_path / "synth.json", **cfg)


def tiny_run_config(tmp_path, data_dir, **overrides):
    cfg = dict(
        data_dir=str(data_dir),
        methods=["DENSE_un"],
        windows=[5],
        training={"max_epochs": 2},
        seed=5,
    )
    cfg.update(overrides)
    return write_config(tmp_path / "run.json", **cfg)


class TestGenerateCommand:
    def test_writes_expected_files(self, tmp_path):
        cfg = tiny_synth_config(tmp_path)
        out = tmp_path / "data"
        assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
        assert sorted(p.name for p in out.glob("*.csv")) == [
            "node_000.csv",
            "node_001.csv",
        ]
        assert (out / "manifest.json").exists()

    def test_rerun_is_identical(self, tmp_path):
        cfg = tiny_synth_config(tmp_path)
        main(["generate", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["generate", "--config", str(cfg), "--out", str(tmp_path / "b")])
        for name in ("node_000.csv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_invalid_rate_exits_with_config_error(self, tmp_path):
        cfg = tiny_synth_config(tmp_path, anomaly_rate=2.0)
        assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1

    def test_unknown_field_exits_with_config_error(self, tmp_path):
        cfg = tiny_synth_config(tmp_path, mystery_knob=3)
        assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1


@pytest.fixture(scope="module")
def generated_data(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("data")
    cfg = tiny_synth_config(tmp)
    out = tmp / "nodes"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


class TestTrainCommand:
    def test_exp_needs_no_model_files(self, tmp_path, generated_data):
        cfg = tiny_run_config(tmp_path, generated_data, methods=["EXP"])
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        assert not (out / "models").exists()
        log = json.loads((out / "train_log.json").read_text())
        assert log["config"]["methods"] == ["EXP"]
        assert log["jobs"] == []

    def test_ruad_trains_one_model_per_node(self, tmp_path, generated_data):
        cfg = tiny_run_config(tmp_path, generated_data, methods=["RUAD"], windows=[5])
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        files = sorted(p.as_posix() for p in (out / "models").glob("*/RUAD_W5.json"))
        assert len(files) == 2
        assert (out / "models" / "node_000" / "RUAD_W5_loss.csv").exists()

    def test_rerun_skips_existing_models(self, tmp_path, generated_data):
        cfg = tiny_run_config(tmp_path, generated_data, methods=["CLU"])
        out = tmp_path / "run"
        main(["train", "--config", str(cfg), "--out", str(out)])
        first = {
            p: p.stat().st_mtime_ns for p in (out / "models").glob("*/CLU.json")
        }
        assert len(first) == 2
        main(["train", "--config", str(cfg), "--out", str(out)])
        log = json.loads((out / "train_log.json").read_text())
        statuses = {job["status"] for job in log["jobs"]}
        assert statuses == {"skipped-exists"}
        for p, mtime in first.items():
            assert p.stat().st_mtime_ns == mtime

    def test_missing_data_dir_is_a_data_error(self, tmp_path):
        cfg = tiny_run_config(tmp_path, tmp_path / "nowhere")
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


class TestEvaluateCommand:
    def test_perfect_oracle_scores_give_auc_one(self, tmp_path, generated_data):
        cfg = tiny_run_config(tmp_path, generated_data, methods=["EXP"])
        out = tmp_path / "run"
        out.mkdir()
        series = ScoreSeries(
            node_id="node_000",
            bucket_starts=np.arange(10) * 900,
            probabilities=np.array([1.0] * 5 + [0.0] * 5),
            labels=np.array([1] * 5 + [0] * 5),
        )
        write_scores_csv(out / "scores" / "EXP.csv", [series])
        assert main(["evaluate", "--config", str(cfg), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["EXP"]["auc"] == 1.0
        assert summary["EXP"]["positives"] == 5

    def test_dummy_scores_sit_at_chance(self, tmp_path, generated_data):
        cfg = tiny_run_config(tmp_path, generated_data, methods=["EXP"])
        out = tmp_path / "run"
        out.mkdir()
        rng = np.random.default_rng(0)
        series = ScoreSeries(
            node_id="node_000",
            bucket_starts=np.arange(5000) * 900,
            probabilities=dummy_scores(5000, seed=1),
            labels=rng.integers(0, 2, size=5000),
        )
        write_scores_csv(out / "scores" / "EXP.csv", [series])
        main(["evaluate", "--config", str(cfg), "--out", str(out)])
        summary = json.loads((out / "summary.json").read_text())
        assert abs(summary["EXP"]["auc"] - 0.5) < 0.05

    def test_summary_lists_each_requested_method_once(self, tmp_path, generated_data):
        cfg = tiny_run_config(
            tmp_path,
            generated_data,
            methods=["EXP", "CLU", "DENSE_un", "RUAD"],
            windows=[5, 10],
        )
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["evaluate", "--config", str(cfg), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert sorted(summary) == ["CLU", "DENSE_un", "EXP", "RUAD_W10", "RUAD_W5"]
        for name in ("EXP", "CLU", "DENSE_un"):
            assert (out / "reports" / f"{name}_roc.json").exists()
            assert (out / "reports" / f"{name}_roc.csv").exists()

    def test_single_class_method_error_does_not_poison_others(
        self, tmp_path, generated_data
    ):
        cfg = tiny_run_config(tmp_path, generated_data, methods=["EXP", "CLU"])
        out = tmp_path / "run"
        out.mkdir()
        # an EXP score file with only negatives: ROC undefined for EXP only
        broken = ScoreSeries(
            node_id="node_000",
            bucket_starts=np.arange(4) * 900,
            probabilities=np.array([0.1, 0.2, 0.3, 0.4]),
            labels=np.zeros(4, dtype=int),
        )
        write_scores_csv(out / "scores" / "EXP.csv", [broken])
        main(["train", "--config", str(cfg), "--out", str(out)])
        assert main(["evaluate", "--config", str(cfg), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert "error" in summary["EXP"] and "no positive" in summary["EXP"]["error"]
        assert "auc" in summary["CLU"]


class TestRunConfig:
    def test_unknown_method_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown methods"):
            RunConfig(data_dir=str(tmp_path), methods=["DENSE_un", "LSTM_MEGA"])

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path / "c.json", data_dir=".", typo_key=1)
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_file(path)

    def test_unknown_training_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="training keys"):
            RunConfig(data_dir=".", training={"momentum": 0.9})

    def test_method_instances_expand_windows(self):
        cfg = RunConfig(data_dir=".", methods=["EXP", "RUAD"], windows=[5, 10])
        assert cfg.method_instances() == [("EXP", None), ("RUAD", 5), ("RUAD", 10)]
