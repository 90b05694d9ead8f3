"""Baseline learners written from scratch: k-NN, CART decision tree, random forest."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotFitted
from .rng import Rng, derive_seed

N_CLASSES = 4


def _bincount(y, weights=None) -> np.ndarray:
    return np.bincount(y, weights=weights, minlength=N_CLASSES)[:N_CLASSES]


def majority(counts) -> int:
    """Class with the largest count; ties go to the smallest class code."""
    return int(np.argmax(np.asarray(counts)))


def matrix_hash(x: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(x, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<i8").tobytes())
    return h.hexdigest()


# ------------------------------------------------------------------ k-NN

class KnnClassifier:
    def __init__(self, k: int = 5, distance: str = "euclidean"):
        if distance not in ("euclidean", "manhattan"):
            raise ValueError(f"unknown distance {distance!r}")
        self.k = k
        self.distance = distance
        self.x_ = None
        self.y_ = None

    def fit(self, x, y) -> "KnnClassifier":
        x = np.asarray(x, dtype=np.float64)
        if not 1 <= self.k <= len(x):
            raise ValueError(f"k={self.k} needs between 1 and {len(x)} training rows")
        self.x_ = x
        self.y_ = np.asarray(y, dtype=np.int64)
        return self

    def _distances(self, q: np.ndarray) -> np.ndarray:
        diff = q[:, None, :] - self.x_[None, :, :]
        if self.distance == "euclidean":
            # squared distance has the same ordering and no sqrt round-off
            return np.einsum("ijk,ijk->ij", diff, diff)
        return np.abs(diff).sum(axis=2)

    def predict(self, x) -> np.ndarray:
        if self.x_ is None:
            raise NotFitted("KnnClassifier.predict before fit")
        q = np.atleast_2d(np.asarray(x, dtype=np.float64))
        m, n = self.x_.shape
        chunk = max(1, int(4_000_000 // max(1, m * n)))
        out = np.empty(len(q), dtype=np.int64)
        for start in range(0, len(q), chunk):
            d = self._distances(q[start:start + chunk])
            # stable sort: equal distances keep the lower training row first
            nearest = np.argsort(d, axis=1, kind="stable")[:, :self.k]
            for r, idx in enumerate(nearest):
                out[start + r] = majority(_bincount(self.y_[idx]))
        return out

    def to_dict(self) -> dict:
        if self.x_ is None:
            raise NotFitted("cannot serialise an unfitted model")
        return {"kind": "knn", "k": self.k, "distance": self.distance,
                "train_hash": matrix_hash(self.x_, self.y_), "n_train": len(self.y_)}


# ------------------------------------------------------------------ tree

@dataclass
class Leaf:
    label: int
    counts: tuple

    def to_dict(self):
        return {"leaf": self.label, "counts": list(self.counts)}


@dataclass
class Split:
    feature: int
    threshold: float
    left: object
    right: object

    def to_dict(self):
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}


def node_from_dict(d):
    if "leaf" in d:
        return Leaf(int(d["leaf"]), tuple(int(c) for c in d["counts"]))
    return Split(int(d["feature"]), float(d["threshold"]),
                 node_from_dict(d["left"]), node_from_dict(d["right"]))


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


def _best_split(x, y, features, min_leaf):
    """Lowest weighted-Gini split over ``features``.

    Minimising weighted Gini is the same as maximising
    ``sum(cL^2)/nL + sum(cR^2)/nR``; candidates are visited in ascending
    (feature, threshold) order and replace the incumbent only when strictly
    better, which implements the tie-break.
    """
    m = len(y)
    onehot = np.zeros((m, N_CLASSES))
    onehot[np.arange(m), y] = 1.0
    best = None  # (score, feature, threshold)
    for f in sorted(features):
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        v = col[order]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        # boundary k separates v[:k+1] from v[k+1:]
        valid = v[1:] > v[:-1]
        n_left = np.arange(1, m)
        valid &= (n_left >= min_leaf) & (m - n_left >= min_leaf)
        if not valid.any():
            continue
        right = left[-1] + onehot[order[-1]] - left
        n_right = m - n_left
        score = (left ** 2).sum(axis=1) / n_left + (right ** 2).sum(axis=1) / n_right
        score = np.where(valid, score, -np.inf)
        k = int(np.argmax(score))  # first maximum = lowest threshold
        if best is None or score[k] > best[0] * (1 + 1e-12) + 1e-12:
            best = (float(score[k]), f, float((v[k] + v[k + 1]) / 2.0))
    return best


class DecisionTreeClassifier:
    def __init__(self, max_depth: int | None = 12, min_samples_leaf: int = 2,
                 features_per_split: int | None = None, rng: Rng | None = None):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.features_per_split = features_per_split
        self.rng = rng
        self.root = None

    def _grow(self, x, y, depth):
        counts = _bincount(y)
        leaf = Leaf(majority(counts), tuple(int(c) for c in counts))
        if (np.count_nonzero(counts) <= 1
                or (self.max_depth is not None and depth >= self.max_depth)
                or len(y) < 2 * self.min_samples_leaf):
            return leaf
        n = x.shape[1]
        if self.features_per_split is None or self.features_per_split >= n:
            features = range(n)
        else:
            features = self.rng.sample(n, self.features_per_split).tolist()
        best = _best_split(x, y, features, self.min_samples_leaf)
        if best is None:
            return leaf
        _, f, t = best
        mask = x[:, f] <= t
        return Split(f, t, self._grow(x[mask], y[mask], depth + 1),
                     self._grow(x[~mask], y[~mask], depth + 1))

    def fit(self, x, y) -> "DecisionTreeClassifier":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) < 1:
            raise ValueError("cannot fit a tree on zero rows")
        self.root = self._grow(x, y, 0)
        return self

    def predict(self, x) -> np.ndarray:
        if self.root is None:
            raise NotFitted("DecisionTreeClassifier.predict before fit")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(len(x), dtype=np.int64)
        self._route(self.root, x, np.arange(len(x)), out)
        return out

    def _route(self, node, x, idx, out):
        if isinstance(node, Leaf):
            out[idx] = node.label
            return
        mask = x[idx, node.feature] <= node.threshold
        self._route(node.left, x, idx[mask], out)
        self._route(node.right, x, idx[~mask], out)

    def depth(self) -> int:
        def walk(node):
            return 0 if isinstance(node, Leaf) else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def to_dict(self) -> dict:
        if self.root is None:
            raise NotFitted("cannot serialise an unfitted model")
        return {"kind": "tree", "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf, "root": self.root.to_dict()}


# ---------------------------------------------------------------- forest

class RandomForestClassifier:
    def __init__(self, n_trees: int = 100, features_per_split: int | None = None,
                 max_depth: int | None = 12, min_samples_leaf: int = 2, seed: int = 0,
                 bootstrap: bool = True):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = n_trees
        self.features_per_split = features_per_split
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed
        self.bootstrap = bootstrap
        self.trees = []
        self.tree_seeds = []

    def fit(self, x, y) -> "RandomForestClassifier":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        m, n = x.shape
        fps = self.features_per_split or math.ceil(math.sqrt(n))
        self.trees, self.tree_seeds = [], []
        for t in range(self.n_trees):
            seed = derive_seed(self.seed, t)
            rng = Rng(seed)
            idx = rng.integers(m, m) if self.bootstrap else np.arange(m)
            tree = DecisionTreeClassifier(self.max_depth, self.min_samples_leaf, fps, rng)
            self.trees.append(tree.fit(x[idx], y[idx]))
            self.tree_seeds.append(seed)
        return self

    def predict(self, x) -> np.ndarray:
        if not self.trees:
            raise NotFitted("RandomForestClassifier.predict before fit")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        votes = np.zeros((len(x), N_CLASSES), dtype=np.int64)
        rows = np.arange(len(x))
        for tree in self.trees:
            votes[rows, tree.predict(x)] += 1
        return np.argmax(votes, axis=1)

    def to_dict(self) -> dict:
        if not self.trees:
            raise NotFitted("cannot serialise an unfitted model")
        return {"kind": "forest", "n_trees": self.n_trees,
                "features_per_split": self.features_per_split, "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf, "seed": self.seed,
                "bootstrap": self.bootstrap, "tree_seeds": [str(s) for s in self.tree_seeds],
                "trees": [t.root.to_dict() for t in self.trees]}


def model_to_json(model) -> str:
    return json.dumps(model.to_dict(), sort_keys=True) + "\n"


def model_from_json(text: str, train_x=None, train_y=None):
    """Rebuild a model; k-NN needs the training matrix whose hash it recorded."""
    d = json.loads(text)
    if d["kind"] == "knn":
        if train_x is None:
            raise ValueError("k-NN models need their training data to be restored")
        if matrix_hash(np.asarray(train_x, dtype=np.float64),
                       np.asarray(train_y, dtype=np.int64)) != d["train_hash"]:
            raise ValueError("training data does not match the hash stored with the model")
        return KnnClassifier(d["k"], d["distance"]).fit(train_x, train_y)
    if d["kind"] == "tree":
        tree = DecisionTreeClassifier(d["max_depth"], d["min_samples_leaf"])
        tree.root = node_from_dict(d["root"])
        return tree
    if d["kind"] == "forest":
        forest = RandomForestClassifier(d["n_trees"], d["features_per_split"], d["max_depth"],
                                        d["min_samples_leaf"], d["seed"], d["bootstrap"])
        for root in d["trees"]:
            tree = DecisionTreeClassifier(d["max_depth"], d["min_samples_leaf"])
            tree.root = node_from_dict(root)
            forest.trees.append(tree)
        forest.tree_seeds = [int(s) for s in d["tree_seeds"]]
        return forest
    raise ValueError(f"unknown model kind {d['kind']!r}")


@dataclass(frozen=True)
class CvResult:
    mean: float
    fold_accuracies: tuple[float, ...]


def cross_validate(make_model, x, plan) -> CvResult:
    """Train on all folds but one, score on the held-out fold, for every fold.

    ``make_model`` is a zero-argument factory returning an object with
    ``fit(x, y)`` and ``predict(x)``.
    """
    values = np.asarray(getattr(x, "values", x))
    labels = np.asarray(x.labels)
    accs = []
    for f, test_idx in enumerate(plan.folds):
        train_idx = plan.train_indices(f)
        model = make_model().fit(values[train_idx], labels[train_idx])
        pred = model.predict(values[test_idx])
        accs.append(float(np.mean(pred == labels[test_idx])))
    return CvResult(float(np.mean(accs)), tuple(accs))
