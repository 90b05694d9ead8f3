"""Layer primitives in NHWC layout with hand-written backward passes.

Forward matrix products go through ``np.einsum`` without BLAS dispatch so
that a row's output does not depend on how many rows share the batch.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import BadClass, OddDimensions, ShapeMismatch

PROB_FLOOR = 1e-12


def _same_pads(size: int, k: int, stride: int) -> tuple[int, int]:
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def _pad_spec(h, w, kh, kw, stride, padding):
    if padding == "same":
        return _same_pads(h, kh, stride), _same_pads(w, kw, stride)
    if padding == "valid":
        return (0, 0), (0, 0)
    raise ValueError(f"unknown padding {padding!r}")


def _patches(xp, kh, kw, stride):
    """(B, Ho, Wo, kh, kw, C) view of sliding windows."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # sliding_window_view puts window axes last: (B, Ho', Wo', C, kh, kw)
    win = win[:, ::stride, ::stride]
    return win.transpose(0, 1, 2, 4, 5, 3)


def conv2d_forward(x, kernels, bias=None, stride: int = 1, padding: str = "same"):
    """Cross-correlation of a (B, H, W, C) batch with (kh, kw, C, F) kernels.

    A 3-D input is treated as a single image.  Returns the output and a cache
    for :func:`conv2d_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    kernels = np.asarray(kernels, dtype=np.float64)
    if x.ndim != 4 or kernels.ndim != 4 or kernels.shape[2] != x.shape[3]:
        raise ShapeMismatch(f"input {x.shape} incompatible with kernels {kernels.shape}")
    kh, kw, c, f = kernels.shape
    (pt, pb), (pl, pr) = _pad_spec(x.shape[1], x.shape[2], kh, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ShapeMismatch("kernel larger than padded input")
    cols = _patches(xp, kh, kw, stride)
    b, ho, wo = cols.shape[:3]
    cols2 = np.ascontiguousarray(cols).reshape(b * ho * wo, kh * kw * c)
    out = np.einsum("ni,io->no", cols2, kernels.reshape(kh * kw * c, f))
    if bias is not None:
        out = out + bias
    out = out.reshape(b, ho, wo, f)
    cache = (x.shape, xp.shape, (pt, pl), cols2, kernels, stride)
    return (out[0] if single else out), cache


def conv2d_backward(grad, cache):
    """Gradients w.r.t. input, kernels and bias."""
    x_shape, xp_shape, (pt, pl), cols2, kernels, stride = cache
    kh, kw, c, f = kernels.shape
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim == 3:
        grad = grad[None]
    b, ho, wo, _ = grad.shape
    g2 = grad.reshape(b * ho * wo, f)
    dk = (cols2.T @ g2).reshape(kernels.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ kernels.reshape(kh * kw * c, f).T).reshape(b, ho, wo, kh, kw, c)
    dxp = np.zeros(xp_shape)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, pt:pt + x_shape[1], pl:pl + x_shape[2], :]
    if len(x_shape) == 3:
        dx = dx[0]
    return dx.reshape(x_shape), dk, db


def maxpool2x2(x):
    """2x2 / stride 2 max pooling; returns output and the argmax cache."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise OddDimensions(f"max pooling needs even height and width, got {h}x{w}")
    blocks = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(b, h // 2, w // 2, c, 4)  # row-major order inside the block
    arg = np.argmax(blocks, axis=-1)  # first maximum wins ties
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    cache = (x.shape, arg, single)
    return (out[0] if single else out), cache


def maxpool2x2_backward(grad, cache):
    shape, arg, single = cache
    b, h, w, c = shape
    grad = np.asarray(grad, dtype=np.float64)
    if single:
        grad = grad[None]
    blocks = np.zeros((b, h // 2, w // 2, c, 4))
    np.put_along_axis(blocks, arg[..., None], grad[..., None], axis=-1)
    dx = blocks.reshape(b, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(shape)
    return dx[0] if single else dx


def dense_forward(x, w, b=None):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} != weight rows {w.shape[0]}")
    out = np.einsum("ni,io->no", np.atleast_2d(x), w)
    if b is not None:
        out = out + b
    return out if x.ndim > 1 else out[0]


def dense_backward(grad, x, w):
    x2 = np.atleast_2d(x)
    g2 = np.atleast_2d(grad)
    return (g2 @ w.T).reshape(np.shape(x)), x2.T @ g2, g2.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad, x):
    return grad * (x > 0)


def dropout_apply(x, p: float, rng=None, train: bool = True):
    """Inverted dropout; returns ``(output, mask)`` with ``mask=None`` when inactive."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not train or p == 0.0:
        return x, None
    keep = rng.uniform_array(np.shape(x)) >= p
    mask = keep / (1.0 - p)
    return x * mask, mask


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sparse_ce_loss(probs, target):
    """Mean cross-entropy and its gradient w.r.t. the logits.

    ``probs`` is (B, K) softmax output (a single row is accepted),
    ``target`` integer class codes.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    target = np.atleast_1d(np.asarray(target))
    k = probs.shape[1]
    if target.shape[0] != probs.shape[0]:
        raise ShapeMismatch("one target per row of probabilities")
    if np.any((target < 0) | (target >= k)) or not np.all(target == np.floor(target)):
        raise BadClass(f"targets must be integers in 0..{k - 1}")
    target = target.astype(np.int64)
    rows = np.arange(len(target))
    loss = float(np.mean(-np.log(np.maximum(probs[rows, target], PROB_FLOOR))))
    grad = probs.copy()
    grad[rows, target] -= 1.0
    return loss, grad / len(target)


def l1l2_penalty(weights, l1: float, l2: float):
    """``l1*sum|w| + l2*sum w^2`` over a list of arrays, with subgradients (sign(0) = 0)."""
    if l1 < 0 or l2 < 0:
        raise ValueError("regularisation coefficients must be nonnegative")
    total = 0.0
    grads = []
    for w in weights:
        total += l1 * float(np.abs(w).sum()) + l2 * float((w * w).sum())
        grads.append(l1 * np.sign(w) + 2.0 * l2 * w)
    return total, grads


def sgd_step(params: dict, grads: dict, lr: float) -> None:
    for name, g in grads.items():
        params[name] -= lr * g


def adam_step(params: dict, grads: dict, state: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update; ``state`` holds ``t``, ``m`` and ``v``."""
    state["t"] += 1
    t = state["t"]
    for name, g in grads.items():
        m = state["m"][name] = beta1 * state["m"][name] + (1.0 - beta1) * g
        v = state["v"][name] = beta2 * state["v"][name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
