"""On-disk pipeline stages shared by the CLI and the acceptance tests.

Every stage reads the previous stage's files from the run directory and
writes its own, so any stage can be re-run in isolation.  Stage seeds come
from the master seed via :func:`evcharge.rng.derive_seed` with the stage
indices in :data:`STAGE_INDEX`.
"""
from __future__ import annotations

import copy
import json
import time
from pathlib import Path

import numpy as np

from . import igtd
from .classifiers import (
    DecisionTreeClassifier,
    KnnClassifier,
    RandomForestClassifier,
    cross_validate,
    model_from_json,
    model_to_json,
)
from .data_model import GeneratorRules, generate_synthetic_trips, load_csv, write_csv
from .errors import DataError
from .metrics import (
    RunReport,
    classification_report,
    comparison_table,
    confusion_matrix,
    fingerprint,
    table_csv,
    table_text,
)
from .nn import CnnClassifier, TrainConfig, deep_spec, default_spec, load_checkpoint, predict, save_checkpoint, train_cnn
from .preprocess import (
    DEFAULT_ONEHOT,
    EncoderMap,
    FoldPlan,
    SplitIndices,
    downsample,
    fit_encoders,
    kfold_plan,
    load_matrix,
    save_matrix,
    train_test_split,
    transform,
)
from .rng import derive_seed

STAGE_INDEX = {"generate": 0, "downsample": 1, "split": 2, "folds": 3, "igtd": 4, "model": 5}
MODELS = ("knn", "tree", "forest", "cnn")

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "csv": None,
        "n": 20000,
        "signal_strength": 1.0,
        "class_priors": [0.25, 0.30, 0.15, 0.30],
    },
    "preprocess": {
        "onehot_columns": list(DEFAULT_ONEHOT),
        "image_onehot_columns": [],
        "caps": {"1": 9000, "3": 9000},
        "test_fraction": 0.3,
        "cv_folds": 10,
    },
    "igtd": {
        "feature_metric": "euclidean",
        "pixel_metric": "euclidean",
        "error_kind": "abs",
        "ni": 4,
        "nj": 4,
        "max_steps": 10000,
        "patience": 32,
    },
    "model": {
        "name": "tree",
        "knn": {"k": 5, "distance": "euclidean"},
        "tree": {"max_depth": 12, "min_samples_leaf": 2},
        "forest": {"n_trees": 100, "features_per_split": None, "max_depth": 12,
                   "min_samples_leaf": 2},
        "cnn": {"preset": "basic", "dropout": 0.2, "optimizer": "adam", "lr": 0.001,
                "batch_size": 32, "epochs": 15, "l1": 1e-5, "l2": 1e-4,
                "early_stopping_patience": None},
    },
}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(user: dict | None = None) -> dict:
    return merge(DEFAULT_CONFIG, user or {})


def stage_seed(cfg: dict, stage: str) -> int:
    return derive_seed(int(cfg["seed"]), STAGE_INDEX[stage])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _echo(out: Path, stage: str, cfg: dict) -> None:
    # the run directory itself is left out so relocated runs compare equal
    _write_json(out / f"{stage}.config.json", {k: v for k, v in cfg.items() if k != "out"})


def _require(path: Path) -> Path:
    if not path.exists():
        raise DataError(f"missing artifact {path}; run the previous stage first")
    return path


# ------------------------------------------------------------------ stages

def run_generate(cfg: dict, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = cfg["data"]
    rules = GeneratorRules(tuple(float(p) for p in data["class_priors"]),
                           float(data["signal_strength"]), stage_seed(cfg, "generate"))
    dataset = generate_synthetic_trips(int(data["n"]), rules)
    write_csv(dataset, out / "trips.csv")
    _echo(out, "generate", cfg)
    return out / "trips.csv"


def run_preprocess(cfg: dict, out) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    source = cfg["data"].get("csv") or _require(out / "trips.csv")
    dataset = load_csv(source)
    pre = cfg["preprocess"]

    enc = fit_encoders(dataset, pre["onehot_columns"])
    enc_img = fit_encoders(dataset, pre["image_onehot_columns"])
    tabular = transform(dataset, enc, normalize=True)
    image = transform(dataset, enc_img, normalize=True)
    tabular = downsample(tabular, pre["caps"], stage_seed(cfg, "downsample"))
    image = image.take(tabular.row_ids)

    split = train_test_split(tabular, float(pre["test_fraction"]), stage_seed(cfg, "split"))
    folds = kfold_plan(tabular, int(pre["cv_folds"]), stage_seed(cfg, "folds"))

    (out / "encoders.json").write_text(enc.to_json(), encoding="utf-8")
    (out / "encoders_image.json").write_text(enc_img.to_json(), encoding="utf-8")
    save_matrix(tabular, out / "matrix.csv")
    save_matrix(image, out / "matrix_image.csv")
    (out / "split.json").write_text(split.to_json(), encoding="utf-8")
    (out / "folds.json").write_text(folds.to_json(), encoding="utf-8")
    _echo(out, "preprocess", cfg)
    return {"rows": len(tabular.labels), "features": tabular.values.shape[1],
            "image_features": image.values.shape[1]}


def igtd_config(cfg: dict) -> igtd.IgtdConfig:
    return igtd.IgtdConfig(**cfg["igtd"], seed=stage_seed(cfg, "igtd"))


def run_convert(cfg: dict, out) -> igtd.Assignment:
    out = Path(out)
    x = load_matrix(_require(out / "matrix_image.csv"))
    icfg = igtd_config(cfg)
    images, assignment, grid, padded = igtd.convert(x, icfg)
    igtd.write_image_dir(images, out / "images")
    (out / "assignment.json").write_text(assignment.to_json(icfg), encoding="utf-8")
    _echo(out, "convert", cfg)
    return assignment


def _tabular_model(cfg: dict, name: str):
    params = cfg["model"][name]
    if name == "knn":
        return KnnClassifier(int(params["k"]), params["distance"])
    if name == "tree":
        return DecisionTreeClassifier(params["max_depth"], int(params["min_samples_leaf"]))
    if name == "forest":
        return RandomForestClassifier(int(params["n_trees"]), params["features_per_split"],
                                      params["max_depth"], int(params["min_samples_leaf"]),
                                      stage_seed(cfg, "model"))
    raise ValueError(f"unknown tabular model {name!r}")


def cnn_setup(cfg: dict):
    p = cfg["model"]["cnn"]
    spec = (deep_spec if p["preset"] == "deep" else default_spec)(float(p["dropout"]))
    tcfg = TrainConfig(optimizer=p["optimizer"], lr=float(p["lr"]),
                       batch_size=int(p["batch_size"]), epochs=int(p["epochs"]),
                       l1=float(p["l1"]), l2=float(p["l2"]), seed=stage_seed(cfg, "model"),
                       early_stopping_patience=p["early_stopping_patience"])
    return spec, tcfg


def _model_name(cfg: dict) -> str:
    name = cfg["model"]["name"]
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")
    return name


def _load_images(out: Path, row_ids: np.ndarray):
    images = igtd.read_image_dir(_require(out / "images"))
    by_id = {im.row_id: im for im in images}
    try:
        ordered = [by_id[int(r)] for r in row_ids]
    except KeyError:
        raise DataError("image manifest does not cover the preprocessed rows") from None
    return np.stack([im.pixels for im in ordered]), np.asarray([im.label for im in ordered])


def run_train(cfg: dict, out) -> dict:
    out = Path(out)
    name = _model_name(cfg)
    x = load_matrix(_require(out / "matrix.csv"))
    split = SplitIndices.from_json(_require(out / "split.json").read_text())
    start = time.perf_counter()
    if name == "cnn":
        spec, tcfg = cnn_setup(cfg)
        pixels, labels = _load_images(out, x.row_ids)
        params, curves = train_cnn((pixels, labels), spec, tcfg, split)
        save_checkpoint(out / "model_cnn.bin", params, spec)
        (out / "curves_cnn.csv").write_text(curves.to_csv(), encoding="utf-8")
    else:
        model = _tabular_model(cfg, name).fit(x.values[split.train], x.labels[split.train])
        (out / f"model_{name}.json").write_text(model_to_json(model), encoding="utf-8")
    _echo(out, f"train_{name}", cfg)
    return {"model": name, "seconds": time.perf_counter() - start}


def _predict_test(cfg, out, name, x, split):
    if name == "cnn":
        params, spec = load_checkpoint(_require(out / "model_cnn.bin"))
        pixels, _ = _load_images(out, x.row_ids)
        labels, _ = predict(params, spec, pixels[split.test])
        return np.asarray(labels)
    text = _require(out / f"model_{name}.json").read_text()
    model = model_from_json(text, x.values[split.train], x.labels[split.train])
    return model.predict(x.values[split.test])


def cv_factory(cfg: dict, name: str, out: Path | None = None):
    """Zero-argument model factory and matching design matrix for cross-validation."""
    if name != "cnn":
        return (lambda: _tabular_model(cfg, name)), None
    spec, tcfg = cnn_setup(cfg)
    assignment = igtd.Assignment.from_json(_require(out / "assignment.json").read_text())
    grid = igtd.pixel_rank_matrix(cfg["igtd"]["ni"], cfg["igtd"]["nj"], cfg["igtd"]["pixel_metric"])
    image_x = igtd.pad_features(load_matrix(_require(out / "matrix_image.csv")), grid.size)
    return (lambda: CnnClassifier(spec, tcfg, assignment.perm, grid)), image_x


def run_evaluate(cfg: dict, out, with_cv: bool = False) -> RunReport:
    out = Path(out)
    name = _model_name(cfg)
    start = time.perf_counter()
    x = load_matrix(_require(out / "matrix.csv"))
    split = SplitIndices.from_json(_require(out / "split.json").read_text())
    pred = _predict_test(cfg, out, name, x, split)
    truth = x.labels[split.test]
    cm = confusion_matrix(truth, pred)
    cv = None
    if with_cv:
        plan = FoldPlan.from_json(_require(out / "folds.json").read_text())
        factory, cv_x = cv_factory(cfg, name, out)
        result = cross_validate(factory, cv_x if cv_x is not None else x, plan)
        cv = {"k": plan.k, "mean_accuracy": result.mean,
              "fold_accuracies": list(result.fold_accuracies)}
    model_cfg = {"name": name, "params": cfg["model"][name], "seed": int(cfg["seed"])}
    if name == "cnn":
        model_cfg["igtd"] = cfg["igtd"]
    report = RunReport(
        model=name,
        config=model_cfg,
        dataset_fingerprint=fingerprint(x.row_ids, x.labels, split.test),
        report=classification_report(cm),
        confusion=cm,
        cv=cv,
    )
    report.wall_clock_seconds = time.perf_counter() - start
    (out / f"report_{name}.json").write_text(report.to_json(), encoding="utf-8")
    _echo(out, f"evaluate_{name}", cfg)
    return report


def run_report(cfg: dict, out) -> str:
    out = Path(out)
    paths = sorted(out.glob("report_*.json"))
    if not paths:
        raise DataError(f"no report_*.json files in {out}; run evaluate first")
    reports = [RunReport.from_json(p.read_text()) for p in paths]
    fingerprints = {r.dataset_fingerprint for r in reports}
    rows = comparison_table(reports)
    (out / "comparison.csv").write_text(table_csv(rows), encoding="utf-8")
    text = table_text(rows)
    if len(fingerprints) > 1:
        text += "warning: reports were computed on different datasets\n"
    (out / "comparison.txt").write_text(text, encoding="utf-8")
    return text
