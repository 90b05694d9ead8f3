"""Central finite-difference checks of every layer's backward pass."""
from __future__ import annotations

import numpy as np

from ..rng import Rng
from . import layers as L

H = 1e-5
TOLERANCE = 1e-4


def numeric_grad(f, x: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def _normal(rng: Rng, shape):
    u1 = 1.0 - rng.uniform_array(shape)
    u2 = rng.uniform_array(shape)
    return np.sqrt(-2 * np.log(u1)) * np.cos(2 * np.pi * u2)


def check_conv(rng: Rng) -> float:
    b, hgt, wid = 1 + rng.below(2), 2 + rng.below(4), 2 + rng.below(4)
    c, f, k = 1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3)
    stride = 1 + rng.below(2)
    padding = ("same", "valid")[rng.below(2)] if k <= min(hgt, wid) else "same"
    x = _normal(rng, (b, hgt, wid, c))
    w = _normal(rng, (k, k, c, f))
    bias = _normal(rng, (f,))
    out, cache = L.conv2d_forward(x, w, bias, stride, padding)
    g = _normal(rng, out.shape)
    dx, dw, db = L.conv2d_backward(g, cache)

    def loss():
        return float((L.conv2d_forward(x, w, bias, stride, padding)[0] * g).sum())

    return max(rel_error(dx, numeric_grad(loss, x)),
               rel_error(dw, numeric_grad(loss, w)),
               rel_error(db, numeric_grad(loss, bias)))


def check_pool(rng: Rng) -> float:
    shape = (1 + rng.below(2), 2 * (1 + rng.below(3)), 2 * (1 + rng.below(3)), 1 + rng.below(3))
    x = _normal(rng, shape)
    out, cache = L.maxpool2x2(x)
    g = _normal(rng, out.shape)
    dx = L.maxpool2x2_backward(g, cache)
    return rel_error(dx, numeric_grad(lambda: float((L.maxpool2x2(x)[0] * g).sum()), x))


def check_dense(rng: Rng) -> float:
    b, n, m = 1 + rng.below(4), 1 + rng.below(6), 1 + rng.below(6)
    x, w, bias = _normal(rng, (b, n)), _normal(rng, (n, m)), _normal(rng, (m,))
    g = _normal(rng, (b, m))
    dx, dw, db = L.dense_backward(g, x, w)

    def loss():
        return float((L.dense_forward(x, w, bias) * g).sum())

    return max(rel_error(dx, numeric_grad(loss, x)),
               rel_error(dw, numeric_grad(loss, w)),
               rel_error(db, numeric_grad(loss, bias)))


def check_relu(rng: Rng) -> float:
    x = _normal(rng, (1 + rng.below(4), 1 + rng.below(6)))
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    g = _normal(rng, x.shape)
    return rel_error(L.relu_backward(g, x), numeric_grad(lambda: float((L.relu(x) * g).sum()), x))


def check_softmax_ce(rng: Rng) -> float:
    b, k = 1 + rng.below(5), 4
    logits = 3 * _normal(rng, (b, k))
    target = np.array([rng.below(k) for _ in range(b)])
    _, grad = L.sparse_ce_loss(L.softmax(logits), target)
    num = numeric_grad(lambda: L.sparse_ce_loss(L.softmax(logits), target)[0], logits)
    return rel_error(grad, num)


def check_l1l2(rng: Rng) -> float:
    ws = [_normal(rng, (1 + rng.below(4), 1 + rng.below(4))) for _ in range(1 + rng.below(3))]
    for w in ws:
        w[np.abs(w) < 1e-3] = 0.25
    l1, l2 = rng.random(), rng.random()
    _, grads = L.l1l2_penalty(ws, l1, l2)
    return max(rel_error(g, numeric_grad(lambda: L.l1l2_penalty(ws, l1, l2)[0], w))
               for g, w in zip(grads, ws))


CHECKS = {
    "conv": check_conv,
    "pool": check_pool,
    "dense": check_dense,
    "relu": check_relu,
    "softmax_ce": check_softmax_ce,
    "l1l2": check_l1l2,
}


def run_all(trials: int = 10, seed: int = 0) -> dict[str, float]:
    """Worst relative error per layer type over ``trials`` random shapes."""
    rng = Rng(seed)
    return {name: max(check(rng) for _ in range(trials)) for name, check in CHECKS.items()}
