import io
import json
import os
from dataclasses import replace

import pytest
from rich.console import Console

from noisyneighbor.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, dispatch
from noisyneighbor.core.simulator import dump_scenario
from noisyneighbor.services.file_service import parse_predictions_csv


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for key in [k for k in os.environ if k.startswith("NN_")]:
        monkeypatch.delenv(key)
    return tmp_path


@pytest.fixture
def run():
    def _run(*argv):
        buffer = io.StringIO()
        code = dispatch(list(argv), Console(file=buffer, width=120))
        return code, buffer.getvalue()

    return _run


@pytest.fixture
def raw_csv(workdir, run, small_scenario):
    config = workdir / "scenario.conf"
    config.write_text(dump_scenario(replace(small_scenario, sensor_noise_std=0.05)))
    code, output = run("simulate", "--config", str(config), "--out", "raw.csv", "-q")
    assert code == EXIT_OK
    assert "120 samples, 2 noise intervals" in output
    return workdir / "raw.csv"


@pytest.fixture
def dataset_csv(run, raw_csv):
    code, output = run("aggregate", str(raw_csv), "--out", "dataset.csv", "-q")
    assert code == EXIT_OK
    assert "40 windows, 15 noisy" in output
    return raw_csv.with_name("dataset.csv")


def test_usage_errors(workdir, run):
    assert run()[0] == EXIT_USAGE
    assert run("frobnicate")[0] == EXIT_USAGE
    assert run("train")[0] == EXIT_USAGE
    assert run("sweep", "data.csv", "--param", "gamma")[0] == EXIT_USAGE


def test_help_and_version(workdir, run):
    assert run("--help")[0] == EXIT_OK
    assert run("--version")[0] == EXIT_OK


def test_missing_input_is_a_runtime_error(workdir, run, capsys):
    code, _ = run("aggregate", "nowhere.csv", "-q")
    assert code == EXIT_ERROR
    assert "✗" in capsys.readouterr().err


def test_simulate_writes_truth(raw_csv):
    truth = raw_csv.with_name("raw.truth.csv").read_text().splitlines()
    assert truth[0] == "start_s,end_s,intensity"
    assert len(truth) == 3


def test_analyze(run, raw_csv):
    code, output = run("analyze", str(raw_csv), "--out", "dependence.csv", "-q")
    assert code == EXIT_OK
    assert "MIC" in output
    assert raw_csv.with_name("dependence.csv").read_text().startswith("stat,cpu,bw_in,bw_out\n")


def test_train_and_predict(run, dataset_csv):
    code, output = run("train", str(dataset_csv), "--model", "forest", "--trees", "5", "--seed", "3",
                       "--out", "model.json", "-q")
    assert code == EXIT_OK
    model = json.loads(dataset_csv.with_name("model.json").read_text())
    assert model["model_kind"] == "forest"
    assert model["seed"] == 3
    assert len(model["payload"]["trees"]) == 5

    code, output = run("predict", str(dataset_csv), "--model-file", "model.json", "--out", "pred.csv", "-q")
    assert code == EXIT_OK
    starts, labels = parse_predictions_csv(dataset_csv.with_name("pred.csv").read_text())
    assert len(starts) == 40
    assert set(labels.tolist()) <= {-1, 1}


def test_evaluate_and_report(run, dataset_csv):
    code, output = run("evaluate", str(dataset_csv), "--model", "threshold", "--k", "4",
                       "--out", "report.json", "-q")
    assert code == EXIT_OK
    assert "F1" in output
    report = json.loads(dataset_csv.with_name("report.json").read_text())
    assert report["k"] == 4
    assert report["model"] == "threshold"
    code, output = run("report", "report.json", "-q")
    assert code == EXIT_OK
    assert "pooled" in output


def test_sweep(run, dataset_csv):
    code, _ = run("sweep", str(dataset_csv), "--param", "trees", "--grid", "1,3", "--k", "4",
                  "--out", "trees.csv", "-q")
    assert code == EXIT_OK
    lines = dataset_csv.with_name("trees.csv").read_text().splitlines()
    assert lines[0] == "param,precision,recall,f1"
    assert [line.split(",")[0] for line in lines[1:]] == ["1.000000", "3.000000"]
    assert run("sweep", str(dataset_csv), "--param", "trees", "--grid", "1.5", "-q")[0] == EXIT_ERROR


def test_env_file_overrides(run, dataset_csv):
    env = dataset_csv.with_name("custom.env")
    env.write_text("NN_K_FOLDS=3\n")
    code, _ = run("evaluate", str(dataset_csv), "--model", "threshold", "--env-file", str(env),
                  "--out", "r3.json", "-q")
    assert code == EXIT_OK
    assert json.loads(dataset_csv.with_name("r3.json").read_text())["k"] == 3
