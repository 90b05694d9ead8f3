"""Mini-batch training loop for the image classifier."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import EmptySplit
from ..rng import Rng, derive_seed
from . import layers as L
from .model import CnnSpec, ModelParams, as_batch, backward, forward, init_params, predict


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 15
    l1: float = 1e-5
    l2: float = 1e-4
    seed: int = 0
    early_stopping_patience: int | None = None

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("l1 and l2 must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Curves:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    initial_train_loss: float = float("nan")

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
        for e, row in enumerate(zip(self.train_loss, self.train_acc, self.val_loss, self.val_acc), 1):
            lines.append(",".join([str(e), *(repr(float(v)) for v in row)]))
        return "\n".join(lines) + "\n"


def evaluate(params: ModelParams, spec: CnnSpec, x, y, chunk: int = 1024):
    """Mean cross-entropy and accuracy in inference mode."""
    if len(y) == 0:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    for s in range(0, len(y), chunk):
        xb, yb = x[s:s + chunk], y[s:s + chunk]
        logits, _ = forward(spec, params, xb, train=False)
        probs = L.softmax(logits)
        loss, _ = L.sparse_ce_loss(probs, yb)
        total += loss * len(yb)
        correct += int(np.sum(np.argmax(probs, axis=1) == yb))
    return total / len(y), correct / len(y)


def train_step(spec, params, xb, yb, cfg: TrainConfig, rng: Rng) -> float:
    logits, caches = forward(spec, params, xb, train=True, rng=rng)
    loss, dlogits = L.sparse_ce_loss(L.softmax(logits), yb)
    grads = backward(spec, params, dlogits, caches)
    if cfg.l1 or cfg.l2:
        names = params.kernel_names()
        penalty, pgrads = L.l1l2_penalty([params.weights[n] for n in names], cfg.l1, cfg.l2)
        loss += penalty
        for n, g in zip(names, pgrads):
            grads[n] = grads[n] + g
    if cfg.optimizer == "sgd":
        L.sgd_step(params.weights, grads, cfg.lr)
    else:
        state = {"t": params.t, "m": params.m, "v": params.v}
        L.adam_step(params.weights, grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        params.t = state["t"]
    return loss


def train_cnn(images, spec: CnnSpec, cfg: TrainConfig, split):
    """Train on ``split.train`` and monitor ``split.test`` after every epoch.

    ``images`` is a sequence of ImageSample or a ``(pixels, labels)`` pair
    with uint8 pixels of shape (M, H, W).  Returns ``(params, curves)``.
    """
    if isinstance(images, tuple):
        pixels, labels = images
    else:
        pixels = np.stack([im.pixels for im in images])
        labels = np.asarray([im.label for im in images], dtype=np.int64)
    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.test, dtype=np.int64)
    if len(train_idx) == 0:
        raise EmptySplit("no training images")
    h, w = pixels.shape[1:3]
    params = init_params(spec, (h, w, 1), derive_seed(cfg.seed, 0))
    x = np.asarray(pixels, dtype=np.float64)[..., None] / 255.0
    y = np.asarray(labels, dtype=np.int64)
    xt, yt = x[train_idx], y[train_idx]
    xv, yv = x[val_idx], y[val_idx]
    shuffle_rng = Rng(derive_seed(cfg.seed, 1))
    dropout_rng = Rng(derive_seed(cfg.seed, 2))

    curves = Curves()
    curves.initial_train_loss = evaluate(params, spec, xt, yt)[0]
    best_val, best_params, stale = np.inf, None, 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(yt))
        for s in range(0, len(order), cfg.batch_size):
            batch = order[s:s + cfg.batch_size]
            train_step(spec, params, xt[batch], yt[batch], cfg, dropout_rng)
        tl, ta = evaluate(params, spec, xt, yt)
        vl, va = evaluate(params, spec, xv, yv)
        curves.train_loss.append(tl)
        curves.train_acc.append(ta)
        curves.val_loss.append(vl)
        curves.val_acc.append(va)
        if cfg.early_stopping_patience is not None and len(yv):
            if vl < best_val:
                best_val, best_params, stale = vl, params.copy(), 0
            else:
                stale += 1
                if stale >= cfg.early_stopping_patience:
                    params = best_params
                    break
    return params, curves


class CnnClassifier:
    """fit/predict adapter over tabular rows already scaled to [0, 1].

    Rows are rendered through a fixed feature-to-pixel assignment so the
    image model can be cross-validated alongside the tabular learners.
    """

    def __init__(self, spec: CnnSpec, cfg: TrainConfig, perm, grid):
        self.spec = spec
        self.cfg = cfg
        self.perm = np.asarray(perm, dtype=np.int64)
        self.grid = grid
        self.params = None

    def _pixels(self, x):
        from ..igtd.render import render_pixels

        return render_pixels(x, self.perm, self.grid)

    def fit(self, x, y) -> "CnnClassifier":
        from ..preprocess import SplitIndices

        pixels = self._pixels(x)
        split = SplitIndices(np.arange(len(y)), np.zeros(0, dtype=np.int64), 0)
        self.params, _ = train_cnn((pixels, np.asarray(y)), self.spec, self.cfg, split)
        return self

    def predict(self, x) -> np.ndarray:
        labels, _ = predict(self.params, self.spec, self._pixels(x))
        return np.asarray(labels)
