"""Encoding, normalisation, class rebalancing and split plans."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data_model import CATEGORICAL_COLUMNS, NUMERIC_COLUMNS, ChargeLevel, Dataset
from .errors import BadK, TooFewRows, UnknownColumn, UnseenCategory
from .rng import Rng, derive_seed

DEFAULT_ONEHOT = ("day_type", "day_name", "vehicle_model", "origin", "destination")

# Feature order of the design matrix; categorical columns expand in place.
_INPUT_ORDER = ("start_time", "soc_start", "day_type", "day_name", "vehicle_model",
                "holiday", "origin", "day_of_year", "season", "destination")


@dataclass(frozen=True)
class EncoderMap:
    """Fitted encoding for every input column.

    ``categories`` holds the lexicographically ordered tokens of each
    categorical column (code = position).  ``onehot`` names the categorical
    columns that expand to indicator columns; the rest are ordinal-coded.
    ``ranges`` keeps the (min, max) seen at fit time for each numeric column
    so that later transforms reuse the training scale.
    """

    categories: dict[str, tuple[str, ...]]
    onehot: tuple[str, ...]
    ranges: dict[str, tuple[float, float]]

    def width(self, column: str) -> int:
        if column in self.onehot:
            return len(self.categories[column])
        return 1

    def column_names(self) -> list[str]:
        names = []
        for col in _INPUT_ORDER:
            if col in self.onehot:
                names.extend(f"{col}={tok}" for tok in self.categories[col])
            else:
                names.append(col)
        return names

    def to_json(self) -> str:
        doc = {
            "categories": {k: list(v) for k, v in sorted(self.categories.items())},
            "onehot": list(self.onehot),
            "ranges": {k: [float(a), float(b)] for k, (a, b) in sorted(self.ranges.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EncoderMap":
        doc = json.loads(text)
        return cls(
            categories={k: tuple(v) for k, v in doc["categories"].items()},
            onehot=tuple(doc["onehot"]),
            ranges={k: (float(a), float(b)) for k, (a, b) in doc["ranges"].items()},
        )


@dataclass(frozen=True)
class EncodedMatrix:
    values: np.ndarray
    row_ids: np.ndarray
    column_names: tuple[str, ...]
    labels: np.ndarray

    def __post_init__(self):
        m = self.values.shape[0]
        if len(self.row_ids) != m or len(self.labels) != m:
            raise ValueError("values, row_ids and labels must have the same length")
        if len(self.column_names) != self.values.shape[1]:
            raise ValueError("column_names must match the number of columns")

    @property
    def shape(self):
        return self.values.shape

    def take(self, indices) -> "EncodedMatrix":
        indices = np.asarray(indices, dtype=np.int64)
        return EncodedMatrix(self.values[indices], self.row_ids[indices],
                             self.column_names, self.labels[indices])


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "train": self.train.tolist(),
                           "test": self.test.tolist()}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitIndices":
        doc = json.loads(text)
        return cls(np.asarray(doc["train"], dtype=np.int64),
                   np.asarray(doc["test"], dtype=np.int64), int(doc["seed"]))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[np.ndarray, ...]
    seed: int = 0

    def train_indices(self, f: int) -> np.ndarray:
        return np.sort(np.concatenate([fold for i, fold in enumerate(self.folds) if i != f]))

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "seed": self.seed,
                           "folds": [f.tolist() for f in self.folds]}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        doc = json.loads(text)
        return cls(int(doc["k"]), tuple(np.asarray(f, dtype=np.int64) for f in doc["folds"]),
                   int(doc["seed"]))


def fit_encoders(d: Dataset, onehot_columns=DEFAULT_ONEHOT) -> EncoderMap:
    onehot = tuple(c for c in _INPUT_ORDER if c in set(onehot_columns))
    for col in onehot_columns:
        if col not in CATEGORICAL_COLUMNS:
            raise UnknownColumn(col)
    categories = {col: tuple(sorted(set(d.column(col)))) for col in CATEGORICAL_COLUMNS}
    ranges = {}
    for col in NUMERIC_COLUMNS:
        v = np.asarray(d.column(col), dtype=np.float64)
        ranges[col] = (float(v.min()), float(v.max())) if len(v) else (0.0, 0.0)
    return EncoderMap(categories, onehot, ranges)


def _minmax(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.zeros_like(v)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def transform(d: Dataset, enc: EncoderMap, normalize: bool = True) -> EncodedMatrix:
    m = len(d)
    blocks = []
    for col in _INPUT_ORDER:
        if col in NUMERIC_COLUMNS:
            v = np.asarray(d.column(col), dtype=np.float64)
            if normalize:
                v = _minmax(v, *enc.ranges[col])
            blocks.append(v[:, None])
            continue
        tokens = enc.categories[col]
        lookup = {tok: i for i, tok in enumerate(tokens)}
        codes = np.empty(m, dtype=np.int64)
        for i, tok in enumerate(d.column(col)):
            try:
                codes[i] = lookup[tok]
            except KeyError:
                raise UnseenCategory(col, tok) from None
        if col in enc.onehot:
            block = np.zeros((m, len(tokens)))
            block[np.arange(m), codes] = 1.0
            blocks.append(block)
        else:
            v = codes.astype(np.float64)
            if normalize:
                v = _minmax(v, 0.0, float(len(tokens) - 1))
            blocks.append(v[:, None])
    values = np.hstack(blocks) if m else np.zeros((0, sum(enc.width(c) for c in _INPUT_ORDER)))
    return EncodedMatrix(values, np.arange(m, dtype=np.int64),
                         tuple(enc.column_names()), np.asarray(d.labels(), dtype=np.int64))


def downsample_class(x: EncodedMatrix, level, cap: int, seed: int) -> EncodedMatrix:
    if cap < 1:
        raise ValueError("cap must be >= 1")
    members = np.flatnonzero(x.labels == int(level))
    if len(members) <= cap:
        return x
    keep_members = members[np.sort(Rng(seed).sample(len(members), cap))]
    keep = np.ones(len(x.labels), dtype=bool)
    keep[members] = False
    keep[keep_members] = True
    return x.take(np.flatnonzero(keep))


def downsample(x: EncodedMatrix, caps: dict, seed: int) -> EncodedMatrix:
    """Apply :func:`downsample_class` for each ``{level: cap}`` in ascending level order."""
    caps = {ChargeLevel(int(k)): int(v) for k, v in caps.items()}
    for level in sorted(caps):
        x = downsample_class(x, level, caps[level], derive_seed(seed, int(level)))
    return x


def train_test_split(x: EncodedMatrix, test_fraction: float = 0.3, seed: int = 0) -> SplitIndices:
    m = len(x.labels) if isinstance(x, EncodedMatrix) else int(x)
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if m < 2:
        raise TooFewRows(f"need at least 2 rows, got {m}")
    n_test = int(np.floor(test_fraction * m + 0.5))
    n_test = min(max(n_test, 1), m - 1)
    perm = Rng(seed).permutation(m)
    return SplitIndices(np.sort(perm[n_test:]), np.sort(perm[:n_test]), seed)


def kfold_plan(x: EncodedMatrix, k: int = 10, seed: int = 0) -> FoldPlan:
    m = len(x.labels) if isinstance(x, EncodedMatrix) else int(x)
    if not 2 <= k <= m:
        raise BadK(f"k must satisfy 2 <= k <= {m}, got {k}")
    perm = Rng(seed).permutation(m)
    base, extra = divmod(m, k)
    folds, start = [], 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        folds.append(np.sort(perm[start:start + size]))
        start += size
    return FoldPlan(k, tuple(folds), seed)


def save_matrix(x: EncodedMatrix, path) -> None:
    header = ["row_id", *x.column_names, "label"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for rid, row, lab in zip(x.row_ids, x.values, x.labels):
            fh.write(",".join([str(int(rid)), *(repr(float(v)) for v in row), str(int(lab))]) + "\n")


def load_matrix(path) -> EncodedMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        data = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if header[0] != "row_id" or header[-1] != "label":
        raise ValueError(f"{path}: not an encoded matrix file")
    n = len(header) - 2
    values = np.array([[float(t) for t in r[1:-1]] for r in data], dtype=np.float64).reshape(len(data), n)
    return EncodedMatrix(values,
                         np.array([int(r[0]) for r in data], dtype=np.int64),
                         tuple(header[1:-1]),
                         np.array([int(r[-1]) for r in data], dtype=np.int64))
