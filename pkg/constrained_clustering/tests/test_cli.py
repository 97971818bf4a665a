import numpy as np
import pytest

import run_clustering
from constrained_clustering.trainer import TrainConfig

BLOBS = [
    "--data-format", "blobs",
    "--blob-clusters", "3",
    "--blob-per-cluster", "30",
    "--blob-dim", "4",
    "--blob-separation", "10",
    "--seed", "0",
]


def _printed(capsys):
    return capsys.readouterr().out.strip().splitlines()


def _scores(line):
    return {key: float(value) for key, value in (part.split("=") for part in line.split())}


def test_usage_errors_exit_with_two():
    assert run_clustering.cli_main(["train"]) == 2
    assert run_clustering.cli_main(["frobnicate"]) == 2
    assert run_clustering.cli_main([]) == 2


def test_config_errors_exit_with_one(tmp_path):
    assert run_clustering.cli_main(["train", *BLOBS, "--loss-flags", "median"]) == 1
    assert run_clustering.cli_main(["train", *BLOBS, "--config", str(tmp_path / "missing.cfg")]) == 1
    assert run_clustering.cli_main(["evaluate", *BLOBS]) == 1


def test_constraint_file_is_not_combined_with_a_split(tmp_path):
    constraints = tmp_path / "constraints.jsonl"
    constraints.write_text('{"type": "ml", "a": 0, "b": 1}\n')
    code = run_clustering.cli_main(
        ["train", *BLOBS, "--constraints", str(constraints), "--test-fraction", "0.2", "--init", "raw"]
    )
    assert code == 1


def test_unexpected_read_errors_exit_with_one(tmp_path, caplog):
    table = tmp_path / "table.csv"
    table.write_text("0.0,0.1,0\n5.0,5.1,1\n")
    predictions = tmp_path / "predictions.csv"
    predictions.write_text("")

    code = run_clustering.cli_main(
        ["evaluate", "--data-format", "csv", "--data", str(table), "--has-labels", "--predictions", str(predictions)]
    )
    assert code == 1
    assert "evaluate failed" in caplog.text


def test_config_layers_env_then_file_then_flags(tmp_path, monkeypatch):
    monkeypatch.setenv("DCC_EPOCHS", "3")
    monkeypatch.setenv("DCC_LEARNING_RATE", "0.05")
    config_file = tmp_path / "clustering.cfg"
    config_file.write_text("DCC_EPOCHS=7\nbatch_size=32\nloss_flags=global\n")

    args = run_clustering.build_parser().parse_args(
        ["train", *BLOBS, "--config", str(config_file), "--epochs", "9", "--k", "5"]
    )
    config = TrainConfig.from_mapping(run_clustering._config_values(args))
    assert config.epochs == 9
    assert config.batch_size == 32
    assert config.learning_rate == 0.05
    assert config.n_clusters == 5
    assert config.use_global and not config.use_difficulty


def test_evaluate_scores_a_prediction_file(tmp_path, capsys):
    table = tmp_path / "table.csv"
    table.write_text("0.0,0.1,0\n0.2,0.0,0\n5.0,5.1,1\n5.2,4.9,1\n9.0,0.0,2\n")
    predictions = tmp_path / "predictions.csv"
    predictions.write_text("2\n2\n0\n0\n1\n")

    code = run_clustering.cli_main(
        ["evaluate", "--data-format", "csv", "--data", str(table), "--has-labels", "--predictions", str(predictions)]
    )
    assert code == 0
    scores = _scores(_printed(capsys)[-1])
    assert scores["acc"] == 1.0
    assert scores["nmi"] == pytest.approx(1.0)


@pytest.mark.slow
def test_generate_train_evaluate_round_trip(tmp_path, capsys):
    constraints = tmp_path / "constraints.jsonl"
    model = tmp_path / "model.dccm"
    history = tmp_path / "history.jsonl"
    training = ["--init", "raw", "--hidden-dims", "8", "--embedding-dim", "3", "--epochs", "2", "--batch-size", "32"]

    assert run_clustering.cli_main(["gen-constraints", *BLOBS, "--count", "50", "--out", str(constraints)]) == 0
    assert len(constraints.read_text().splitlines()) >= 50

    code = run_clustering.cli_main(
        ["train", *BLOBS, *training, "--constraints", str(constraints),
         "--model-out", str(model), "--report-out", str(history)]
    )
    assert code == 0
    trained = _printed(capsys)[-1]
    assert len(history.read_text().splitlines()) == 2

    predictions = tmp_path / "predictions.csv"
    assert run_clustering.cli_main(
        ["evaluate", *BLOBS, "--model-in", str(model), "--predictions-out", str(predictions)]
    ) == 0
    assert _printed(capsys)[-1] == trained
    assert len(predictions.read_text().splitlines()) == 90

    assert run_clustering.cli_main(["evaluate", *BLOBS, "--predictions", str(predictions)]) == 0
    np.testing.assert_allclose(
        list(_scores(_printed(capsys)[-1]).values()), list(_scores(trained).values())
    )
