import json

import numpy as np
import pytest

from evcharge import pipeline
from evcharge.cli import main
from evcharge.metrics import RunReport, classification_report, confusion_matrix
from evcharge.preprocess import SplitIndices, load_matrix
from evcharge.classifiers import model_from_json


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    common = ["--out", str(out), "--seed", "5"]
    assert main(["generate", *common, "--n", "600"]) == 0
    assert main(["preprocess", *common]) == 0
    assert main(["convert", *common]) == 0
    return out, common


def test_convert_inventory(run_dir):
    out, _ = run_dir
    rows = (out / "images" / "manifest.csv").read_text().splitlines()
    assert rows[0] == "filename,label,row_id"
    assert len(list((out / "images").glob("*.pgm"))) == len(rows) - 1 == 600
    a = json.loads((out / "assignment.json").read_text())
    assert sorted(a["perm"]) == list(range(16))
    assert a["config"]["ni"] == 4
    x = load_matrix(out / "matrix_image.csv")
    assert x.values.shape[1] == 10


def test_train_evaluate_tree(run_dir, capsys):
    out, common = run_dir
    assert main(["train", *common, "--model", "tree"]) == 0
    assert main(["evaluate", *common, "--model", "tree"]) == 0
    report = RunReport.from_json((out / "report_tree.json").read_text())
    x = load_matrix(out / "matrix.csv")
    split = SplitIndices.from_json((out / "split.json").read_text())
    model = model_from_json((out / "model_tree.json").read_text())
    pred = model.predict(x.values[split.test])
    assert report.accuracy == np.mean(pred == x.labels[split.test])
    assert report.accuracy == classification_report(confusion_matrix(x.labels[split.test], pred)).accuracy
    assert "accuracy" in capsys.readouterr().out


def test_report_table(run_dir, capsys):
    out, common = run_dir
    assert main(["train", *common, "--model", "knn"]) == 0
    assert main(["evaluate", *common, "--model", "knn", "--cv"]) == 0
    assert main(["report", *common]) == 0
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[0] == "method,accuracy" and {l.split(",")[0] for l in lines[1:]} >= {"knn", "tree"}
    knn = json.loads((out / "report_knn.json").read_text())
    assert knn["cross_validation"]["k"] == 10
    assert len(knn["cross_validation"]["fold_accuracies"]) == 10


def test_cnn_path(run_dir):
    out, common = run_dir
    assert main(["train", *common, "--model", "cnn", "--epochs", "2"]) == 0
    assert main(["evaluate", *common, "--model", "cnn", "--epochs", "2"]) == 0
    assert (out / "model_cnn.bin").read_bytes()[:8] == b"EVCNNCK1"
    assert len((out / "curves_cnn.csv").read_text().splitlines()) == 3


def test_stage_configs_echoed(run_dir):
    out, _ = run_dir
    echoed = json.loads((out / "preprocess.config.json").read_text())
    assert echoed["seed"] == 5 and "out" not in echoed


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(l.startswith("PASS") for l in lines)


def _error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ")
    return json.loads(err[len("error: "):])


def test_usage_error_exit_code(capsys):
    assert main(["frobnicate"]) == 2
    assert _error_line(capsys)["kind"] == "UsageError"
    assert main(["convert", "--grid", "4by4"]) == 2


def test_data_error_exit_code(tmp_path, capsys):
    assert main(["preprocess", "--out", str(tmp_path), "--data", str(tmp_path / "nope.csv")]) == 3
    assert _error_line(capsys)["kind"] == "DataError"
    bad = tmp_path / "bad.csv"
    bad.write_text("start_time\n1\n")
    assert main(["preprocess", "--out", str(tmp_path), "--data", str(bad)]) == 3


def test_missing_stage_artifact(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path), "--model", "tree"]) == 3
    assert "run the previous stage" in _error_line(capsys)["message"]


def test_internal_check_failure(monkeypatch, capsys):
    import evcharge.selftest as st

    monkeypatch.setattr(st, "run_selftest", lambda seed: [("fake", False, "forced")])
    assert main(["selftest"]) == 4
    assert _error_line(capsys)["kind"] == "InternalCheckFailed"


def test_config_file_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"data": {"n": 40}, "seed": 9}))
    assert main(["generate", "--config", str(cfg_path), "--out", str(tmp_path / "r")]) == 0
    assert len((tmp_path / "r" / "trips.csv").read_text().splitlines()) == 41
    assert pipeline.resolve_config({"data": {"n": 40}})["data"]["signal_strength"] == 1.0
