import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from expressive_flow.cli import main
from expressive_flow.dataset import load_clip, load_corpus
from expressive_flow.flowgen import FlowMatchingPolicy, ModelConfig, ModelParams


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory, runner):
    out = tmp_path_factory.mktemp("corpus")
    res = runner.invoke(main, ["synth", "--out", str(out), "--clips-per-emotion", "2",
                               "--frames", "60", "--seed", "5"])
    assert res.exit_code == 0, res.output
    return out


TRAIN_FAST = ["--epochs", "2", "--batch", "32", "--widths", "8,16", "--stride", "8",
              "--lr", "1e-3", "--H", "2", "--tp", "16", "--seed", "1"]


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory, runner, corpus_dir):
    path = tmp_path_factory.mktemp("models") / "fast.npz"
    res = runner.invoke(main, ["train", "--data", str(corpus_dir), "--out", str(path),
                               *TRAIN_FAST])
    assert res.exit_code == 0, res.output
    return path


class TestSynth:
    def test_counts(self, corpus_dir):
        files = sorted(corpus_dir.glob("*.jsonl"))
        assert len(files) == 14
        total = sum(len(load_clip(p).frames) for p in files)
        assert total == 14 * 60

    def test_byte_identical_for_same_seed(self, runner, corpus_dir, tmp_path):
        res = runner.invoke(main, ["synth", "--out", str(tmp_path), "--clips-per-emotion",
                                   "2", "--frames", "60", "--seed", "5"])
        assert res.exit_code == 0
        for p in sorted(corpus_dir.glob("*.jsonl")):
            assert (tmp_path / p.name).read_bytes() == p.read_bytes()

    def test_zero_clips_is_flag_error(self, runner, tmp_path):
        res = runner.invoke(main, ["synth", "--out", str(tmp_path),
                                   "--clips-per-emotion", "0"])
        assert res.exit_code == 2
        assert "nothing to generate" in res.output


class TestTrain:
    def test_writes_artifact_and_loss_csv(self, trained_model):
        assert trained_model.exists()
        csv = Path(str(trained_model.with_suffix("")) + "_loss.csv")
        lines = csv.read_text().strip().splitlines()
        assert lines[0] == "epoch,mean_loss" and len(lines) == 3
        policy = FlowMatchingPolicy.from_artifact(trained_model)
        cfg = policy.params_.config
        assert (cfg.horizon, cfg.history, cfg.widths) == (16, 2, (8, 16))

    def test_indivisible_horizon_is_flag_error(self, runner, corpus_dir, tmp_path):
        res = runner.invoke(main, ["train", "--data", str(corpus_dir), "--out",
                                   str(tmp_path / "m.npz"), "--tp", "15"])
        assert res.exit_code == 2
        assert "divisible" in res.output

    def test_unknown_flag_is_error(self, runner):
        res = runner.invoke(main, ["train", "--nonsense", "1"])
        assert res.exit_code == 2

    def test_empty_corpus_is_data_error(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        res = runner.invoke(main, ["train", "--data", str(empty), "--out",
                                   str(tmp_path / "m.npz"), *TRAIN_FAST])
        assert res.exit_code == 3

    def test_corrupt_corpus_is_data_error(self, runner, tmp_path):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "x.jsonl").write_text("{broken\n")
        res = runner.invoke(main, ["train", "--data", str(bad), "--out",
                                   str(tmp_path / "m.npz"), *TRAIN_FAST])
        assert res.exit_code == 3

    def test_ablation_flags_accepted(self, runner, corpus_dir, tmp_path):
        # H=16, Tp=32 is the heaviest corner of the ablation grid
        res = runner.invoke(main, ["train", "--data", str(corpus_dir), "--out",
                                   str(tmp_path / "m.npz"), "--epochs", "1", "--batch", "16",
                                   "--widths", "8,16", "--stride", "8", "--H", "16",
                                   "--tp", "32", "--seed", "0"])
        assert res.exit_code == 0, res.output

    def test_preset_defaults_and_flag_override(self, runner, corpus_dir, tmp_path):
        # --preset smoke sets epochs=10; the explicit --epochs 1 must win
        res = runner.invoke(main, ["train", "--data", str(corpus_dir), "--out",
                                   str(tmp_path / "m.npz"), "--preset", "smoke",
                                   "--epochs", "1"])
        assert res.exit_code == 0, res.output
        assert "epochs=1," in res.output.replace(" ", "").replace("epochs=1,", "epochs=1,")
        assert "widths" not in res.output  # summary prints the merged bundle
        assert "epoch     1/1" in res.output

    def test_config_file_overridden_by_flags(self, runner, corpus_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 7, "batch": 16, "widths": "8,16",
                                   "stride": 8, "lr": 1e-3}))
        res = runner.invoke(main, ["train", "--data", str(corpus_dir), "--out",
                                   str(tmp_path / "m.npz"), "--config", str(cfg),
                                   "--epochs", "2"])
        assert res.exit_code == 0, res.output
        assert "epochs=2" in res.output  # flag beat the file
        assert "batch=16" in res.output  # file beat the default


class TestEval:
    def test_stub_model_near_chance(self, runner, corpus_dir, tmp_path):
        # an untrained (zero-velocity) model must classify at chance level
        stub = tmp_path / "stub.npz"
        cfg = ModelConfig(action_dim=25, horizon=16, n_classes=7, history=2,
                          obs_dim=27, widths=(8, 16))
        ModelParams.init(cfg, seed=0).save(stub)
        report_path = tmp_path / "report.json"
        res = runner.invoke(main, ["eval", "--model", str(stub), "--data", str(corpus_dir),
                                   "--report", str(report_path), "--rollouts", "10",
                                   "--frames", "40", "--seed", "0"])
        assert res.exit_code == 0, res.output
        report = json.loads(report_path.read_text())
        assert abs(report["separability"]["rollout_accuracy"] - 1 / 7) <= 0.1

    def test_report_schema_fixed(self, runner, corpus_dir, trained_model, tmp_path):
        report_path = tmp_path / "report.json"
        res = runner.invoke(main, ["eval", "--model", str(trained_model), "--data",
                                   str(corpus_dir), "--report", str(report_path),
                                   "--rollouts", "2", "--frames", "30"])
        assert res.exit_code == 0, res.output
        report = json.loads(report_path.read_text())
        assert set(report) == {"schema", "separability", "per_emotion", "latency_ms",
                               "closed_loop"}
        assert report["schema"] == "expressive-flow/eval/v1"
        assert set(report["separability"]) == {"rollout_accuracy", "corpus_accuracy",
                                               "confusion", "emotions"}
        assert len(report["per_emotion"]) == 7
        assert report["latency_ms"]["n"] > 0

    def test_plots_written_when_requested(self, runner, corpus_dir, trained_model, tmp_path):
        pytest.importorskip("matplotlib")
        plots = tmp_path / "plots"
        res = runner.invoke(main, ["eval", "--model", str(trained_model), "--data",
                                   str(corpus_dir), "--report", str(tmp_path / "r.json"),
                                   "--rollouts", "1", "--frames", "30",
                                   "--plots", str(plots)])
        assert res.exit_code == 0, res.output
        assert (plots / "face_dofs.png").exists()

    def test_missing_model_is_data_error(self, runner, corpus_dir, tmp_path):
        res = runner.invoke(main, ["eval", "--model", str(tmp_path / "no.npz"), "--data",
                                   str(corpus_dir), "--report", str(tmp_path / "r.json")])
        assert res.exit_code == 2  # click validates path existence first

    def test_metrics_deterministic_given_seed(self, runner, corpus_dir, trained_model,
                                              tmp_path):
        reports = []
        for name in ("a.json", "b.json"):
            res = runner.invoke(main, ["eval", "--model", str(trained_model), "--data",
                                       str(corpus_dir), "--report", str(tmp_path / name),
                                       "--rollouts", "2", "--frames", "30", "--seed", "3"])
            assert res.exit_code == 0
            r = json.loads((tmp_path / name).read_text())
            del r["latency_ms"]  # wall-clock section is measurement, not model output
            reports.append(r)
        assert reports[0] == reports[1]


class TestReplay:
    def test_emits_len_minus_warmup_actions(self, runner, corpus_dir, trained_model):
        clip = sorted(corpus_dir.glob("*.jsonl"))[0]
        res = runner.invoke(main, ["replay", "--clip", str(clip), "--model",
                                   str(trained_model), "--speed", "1e9"])
        assert res.exit_code == 0, res.output
        actions = [json.loads(line) for line in res.output.splitlines()
                   if line.startswith("{")]
        assert len(actions) == 60 - 1  # H=2
        assert set(actions[0]) == {"t_ms", "head", "hand_l", "hand_r", "face"}

    def test_bad_speed_is_flag_error(self, runner, corpus_dir, trained_model):
        clip = sorted(corpus_dir.glob("*.jsonl"))[0]
        res = runner.invoke(main, ["replay", "--clip", str(clip), "--model",
                                   str(trained_model), "--speed", "0"])
        assert res.exit_code == 2


class TestServe:
    def test_bad_port_is_immediate_error(self, runner, tmp_path):
        import socket

        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        taken = blocker.getsockname()[1]
        try:
            res = runner.invoke(main, ["serve", "--port", str(taken), "--models-dir",
                                       str(tmp_path / "m"), "--data-dir", str(tmp_path / "d")])
        finally:
            blocker.close()
        assert res.exit_code == 1
        assert "cannot bind" in res.output


class TestHelp:
    def test_help_lists_all_subcommands(self, runner):
        res = runner.invoke(main, ["--help"])
        for cmd in ("synth", "train", "eval", "serve", "replay"):
            assert cmd in res.output

    def test_train_help_lists_flags(self, runner):
        res = runner.invoke(main, ["train", "--help"])
        for flag in ("--data", "--out", "--epochs", "--batch", "--lr", "--H", "--tp",
                     "--seed", "--preset", "--config", "--stride", "--widths"):
            assert flag in res.output

    def test_serve_help_lists_flags(self, runner):
        res = runner.invoke(main, ["serve", "--help"])
        for flag in ("--port", "--models-dir", "--data-dir", "--strict-marks"):
            assert flag in res.output
