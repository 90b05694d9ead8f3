"""Confusion matrices, per-class reports and the cross-model comparison table."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .data_model import ChargeLevel
from .errors import BadClass, EmptyMatrix, LengthMismatch

N_CLASSES = 4
CLASS_NAMES = tuple(level.name for level in ChargeLevel)


def confusion_matrix(truth, predictions) -> np.ndarray:
    """4x4 counts; rows are true classes, columns predicted classes."""
    truth = np.asarray(truth)
    predictions = np.asarray(predictions)
    if truth.shape != predictions.shape:
        raise LengthMismatch(f"{truth.shape[0]} labels vs {predictions.shape[0]} predictions")
    for arr in (truth, predictions):
        if arr.size and (arr.min() < 0 or arr.max() >= N_CLASSES
                         or not np.all(arr == np.floor(arr))):
            raise BadClass("class codes must be integers in 0..3")
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (truth.astype(np.int64), predictions.astype(np.int64)), 1)
    return cm


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else 0.0


@dataclass(frozen=True)
class ClassReport:
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self) -> dict:
        per_class = {
            name: {"precision": self.precision[i], "recall": self.recall[i],
                   "f1": self.f1[i], "support": self.support[i]}
            for i, name in enumerate(CLASS_NAMES)
        }
        return {"per_class": per_class, "accuracy": self.accuracy,
                "macro_avg": {"precision": self.macro_precision, "recall": self.macro_recall,
                              "f1": self.macro_f1}}

    def to_text(self) -> str:
        lines = [f"{'':>8} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}"]
        for i, name in enumerate(CLASS_NAMES):
            lines.append(f"{name:>8} {self.precision[i]:9.4f} {self.recall[i]:9.4f} "
                         f"{self.f1[i]:9.4f} {self.support[i]:8d}")
        total = sum(self.support)
        lines.append(f"{'accuracy':>8} {'':>9} {'':>9} {self.accuracy:9.4f} {total:8d}")
        lines.append(f"{'macro':>8} {self.macro_precision:9.4f} {self.macro_recall:9.4f} "
                     f"{self.macro_f1:9.4f} {total:8d}")
        return "\n".join(lines) + "\n"


def classification_report(cm) -> ClassReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    tp = np.diag(cm)
    precision = tuple(_ratio(tp[c], cm[:, c].sum()) for c in range(N_CLASSES))
    recall = tuple(_ratio(tp[c], cm[c, :].sum()) for c in range(N_CLASSES))
    f1 = tuple(_ratio(2 * p * r, p + r) for p, r in zip(precision, recall))
    return ClassReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=tuple(int(s) for s in cm.sum(axis=1)),
        accuracy=_ratio(np.trace(cm), total),
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
    )


def fingerprint(*arrays) -> str:
    """SHA-256 over the little-endian bytes of the given arrays."""
    h = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        kind = "<f8" if arr.dtype.kind == "f" else "<i8"
        h.update(arr.astype(kind).tobytes())
    return h.hexdigest()


@dataclass
class RunReport:
    model: str
    config: dict
    dataset_fingerprint: str
    report: ClassReport
    confusion: np.ndarray
    wall_clock_seconds: float = 0.0
    cv: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return self.report.accuracy

    def to_dict(self) -> dict:
        d = {
            "model": self.model,
            "config": self.config,
            "dataset_fingerprint": self.dataset_fingerprint,
            "accuracy": self.report.accuracy,
            "classification_report": self.report.to_dict(),
            "confusion_matrix": self.confusion.tolist(),
            "wall_clock_seconds": self.wall_clock_seconds,
        }
        if self.cv is not None:
            d["cross_validation"] = self.cv
        if self.extra:
            d["extra"] = self.extra
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        cm = np.asarray(d["confusion_matrix"], dtype=np.int64)
        return cls(d["model"], d["config"], d["dataset_fingerprint"], classification_report(cm),
                   cm, d.get("wall_clock_seconds", 0.0), d.get("cross_validation"),
                   d.get("extra", {}))


def comparison_table(reports) -> list[tuple[str, float]]:
    """(method, accuracy) rows, highest accuracy first; ties keep input order."""
    rows = [(r.model, r.accuracy) for r in reports]
    return sorted(rows, key=lambda row: -row[1])


def table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "accuracy"])
    for method, acc in rows:
        w.writerow([method, repr(float(acc))])
    return buf.getvalue()


def table_text(rows) -> str:
    width = max([len("method")] + [len(m) for m, _ in rows])
    lines = [f"{'method':<{width}}  accuracy", f"{'-' * width}  --------"]
    for method, acc in rows:
        lines.append(f"{method:<{width}}  {100 * acc:7.2f}%")
    return "\n".join(lines) + "\n"
