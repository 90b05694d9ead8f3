"""Network definition, parameter initialisation, inference and checkpoints."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeMismatch
from ..rng import Rng
from . import layers as L

N_CLASSES = 4
CHECKPOINT_MAGIC = b"EVCNNCK1"


@dataclass(frozen=True)
class CnnSpec:
    layers: tuple = ()

    def __post_init__(self):
        layers = tuple(dict(l) for l in self.layers)
        object.__setattr__(self, "layers", layers)
        dense = [l for l in layers if l["type"] == "dense"]
        if not dense or dense[-1]["units"] != N_CLASSES:
            raise ValueError(f"the last dense layer must have {N_CLASSES} units")
        for l in layers:
            if l["type"] == "dropout" and not 0.0 <= l["rate"] < 1.0:
                raise ValueError("dropout rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {"layers": [dict(l) for l in self.layers]}

    @classmethod
    def from_dict(cls, d) -> "CnnSpec":
        return cls(tuple(d["layers"]))

    def with_dropout(self, rate: float) -> "CnnSpec":
        return CnnSpec(tuple({**l, "rate": rate} if l["type"] == "dropout" else l
                             for l in self.layers))


def default_spec(dropout: float = 0.2) -> CnnSpec:
    return CnnSpec((
        {"type": "conv", "filters": 8, "kernel": 3, "stride": 1, "padding": "same"},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "dropout", "rate": dropout},
        {"type": "flatten"},
        {"type": "dense", "units": 16},
        {"type": "relu"},
        {"type": "dense", "units": N_CLASSES},
        {"type": "softmax"},
    ))


def deep_spec(dropout: float = 0.2) -> CnnSpec:
    """Two conv blocks; the larger model slot in the comparison table."""
    return CnnSpec((
        {"type": "conv", "filters": 16, "kernel": 3, "stride": 1, "padding": "same"},
        {"type": "relu"},
        {"type": "conv", "filters": 16, "kernel": 3, "stride": 1, "padding": "same"},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "dropout", "rate": dropout},
        {"type": "conv", "filters": 32, "kernel": 3, "stride": 1, "padding": "same"},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "dropout", "rate": dropout},
        {"type": "flatten"},
        {"type": "dense", "units": 32},
        {"type": "relu"},
        {"type": "dense", "units": N_CLASSES},
        {"type": "softmax"},
    ))


@dataclass
class ModelParams:
    """Weights keyed ``"<layer index>.W"`` / ``".b"`` plus Adam state."""

    input_shape: tuple
    weights: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def copy(self) -> "ModelParams":
        return ModelParams(self.input_shape, {k: w.copy() for k, w in self.weights.items()},
                           {k: a.copy() for k, a in self.m.items()},
                           {k: a.copy() for k, a in self.v.items()}, self.t)

    def kernel_names(self) -> list[str]:
        return [k for k in self.weights if k.endswith(".W")]


def _same_out(size, stride):
    return math.ceil(size / stride)


def init_params(spec: CnnSpec, input_shape, seed: int) -> ModelParams:
    """He-style uniform init, weights in +-sqrt(6 / fan_in); zero biases."""
    rng = Rng(seed)
    h, w, c = input_shape
    weights = {}
    flat = None
    for idx, layer in enumerate(spec.layers):
        kind = layer["type"]
        if kind == "conv":
            k, f, s = layer["kernel"], layer["filters"], layer.get("stride", 1)
            fan_in = k * k * c
            limit = math.sqrt(6.0 / fan_in)
            weights[f"{idx}.W"] = rng.uniform_array((k, k, c, f), -limit, limit)
            weights[f"{idx}.b"] = np.zeros(f)
            if layer.get("padding", "same") == "same":
                h, w = _same_out(h, s), _same_out(w, s)
            else:
                h, w = (h - k) // s + 1, (w - k) // s + 1
            c = f
        elif kind == "maxpool":
            if h % 2 or w % 2:
                raise ShapeMismatch(f"layer {idx}: cannot pool a {h}x{w} map")
            h, w = h // 2, w // 2
        elif kind == "flatten":
            flat = h * w * c
        elif kind == "dense":
            if flat is None:
                raise ShapeMismatch("dense layer before flatten")
            units = layer["units"]
            limit = math.sqrt(6.0 / flat)
            weights[f"{idx}.W"] = rng.uniform_array((flat, units), -limit, limit)
            weights[f"{idx}.b"] = np.zeros(units)
            flat = units
    return ModelParams(tuple(input_shape), weights,
                       {k: np.zeros_like(a) for k, a in weights.items()},
                       {k: np.zeros_like(a) for k, a in weights.items()}, 0)


def forward(spec: CnnSpec, params: ModelParams, x, train: bool = False, rng: Rng | None = None):
    """Logits for a (B, H, W, C) batch and the caches needed by :func:`backward`."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != tuple(params.input_shape):
        raise ShapeMismatch(f"expected inputs of shape {params.input_shape}, got {x.shape[1:]}")
    caches = []
    for idx, layer in enumerate(spec.layers):
        kind = layer["type"]
        if kind == "conv":
            x, cache = L.conv2d_forward(x, params.weights[f"{idx}.W"], params.weights[f"{idx}.b"],
                                        layer.get("stride", 1), layer.get("padding", "same"))
        elif kind == "relu":
            cache = x
            x = L.relu(x)
        elif kind == "maxpool":
            x, cache = L.maxpool2x2(x)
        elif kind == "dropout":
            x, cache = L.dropout_apply(x, layer["rate"], rng, train)
        elif kind == "flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        elif kind == "dense":
            cache = x
            x = L.dense_forward(x, params.weights[f"{idx}.W"], params.weights[f"{idx}.b"])
        elif kind == "softmax":
            # folded into the loss during training and into predict_proba otherwise
            cache = None
        else:
            raise ValueError(f"unknown layer type {kind!r}")
        caches.append(cache)
    return x, caches


def backward(spec: CnnSpec, params: ModelParams, dlogits, caches) -> dict:
    grads = {}
    g = dlogits
    for idx in range(len(spec.layers) - 1, -1, -1):
        layer, cache = spec.layers[idx], caches[idx]
        kind = layer["type"]
        if kind == "conv":
            g, grads[f"{idx}.W"], grads[f"{idx}.b"] = L.conv2d_backward(g, cache)
        elif kind == "relu":
            g = L.relu_backward(g, cache)
        elif kind == "maxpool":
            g = L.maxpool2x2_backward(g, cache)
        elif kind == "dropout":
            if cache is not None:
                g = g * cache
        elif kind == "flatten":
            g = g.reshape(cache)
        elif kind == "dense":
            g, grads[f"{idx}.W"], grads[f"{idx}.b"] = L.dense_backward(g, cache, params.weights[f"{idx}.W"])
    return grads


def images_to_batch(pixels) -> np.ndarray:
    """uint8 (B, H, W) -> float (B, H, W, 1) in [0, 1]."""
    arr = np.asarray(pixels, dtype=np.float64) / 255.0
    return arr[..., None] if arr.ndim == 3 else arr


def predict_proba(params: ModelParams, spec: CnnSpec, x) -> np.ndarray:
    logits, _ = forward(spec, params, x, train=False)
    return L.softmax(logits)


def as_batch(params: ModelParams, x):
    """Normalise one image or a batch to float (B, H, W, C); uint8 is rescaled."""
    x = np.asarray(x)
    if x.dtype == np.uint8:
        x = x.astype(np.float64) / 255.0
    h, w, c = params.input_shape
    if x.shape in ((h, w), (h, w, c)):
        return x.reshape(1, h, w, c), True
    if x.shape[1:] in ((h, w), (h, w, c)):
        return x.reshape(len(x), h, w, c), False
    raise ShapeMismatch(f"cannot feed shape {x.shape} to a model expecting {params.input_shape}")


def predict(params: ModelParams, spec: CnnSpec, image):
    """Class code and probabilities for one image, or arrays of both for a batch.

    Ties in the probabilities go to the smallest class code.
    """
    x, single = as_batch(params, image)
    probs = predict_proba(params, spec, x)
    labels = np.argmax(probs, axis=1)
    if single:
        return int(labels[0]), probs[0]
    return labels, probs


# ---------------------------------------------------------- checkpoints

def _tensor_items(params: ModelParams):
    for name in sorted(params.weights):
        yield name, params.weights[name]
    for name in sorted(params.m):
        yield "adam.m." + name, params.m[name]
    for name in sorted(params.v):
        yield "adam.v." + name, params.v[name]


def checkpoint_bytes(params: ModelParams, spec: CnnSpec) -> bytes:
    """Magic, JSON header block, shape table, then little-endian float64 data."""
    items = list(_tensor_items(params))
    header = json.dumps({"spec": spec.to_dict(), "input_shape": list(params.input_shape),
                         "adam_t": params.t, "tensors": [n for n, _ in items]},
                        sort_keys=True).encode("utf-8")
    out = [CHECKPOINT_MAGIC, struct.pack("<I", len(header)), header, struct.pack("<I", len(items))]
    for _, arr in items:
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for _, arr in items:
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(path, params: ModelParams, spec: CnnSpec) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, spec))


def parse_checkpoint(data: bytes):
    if data[:8] != CHECKPOINT_MAGIC:
        raise FormatError("not a model checkpoint")
    pos = 8
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if count != len(header["tensors"]):
        raise FormatError("tensor count disagrees with header")
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shapes.append(struct.unpack_from(f"<{ndim}I", data, pos))
        pos += 4 * ndim
    weights, m, v = {}, {}, {}
    for name, shape in zip(header["tensors"], shapes):
        size = int(np.prod(shape, dtype=np.int64)) * 8
        if pos + size > len(data):
            raise FormatError("truncated checkpoint")
        arr = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(shape).astype(np.float64)
        pos += size
        if name.startswith("adam.m."):
            m[name[7:]] = arr
        elif name.startswith("adam.v."):
            v[name[7:]] = arr
        else:
            weights[name] = arr
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint data")
    params = ModelParams(tuple(header["input_shape"]), weights, m, v, int(header["adam_t"]))
    return params, CnnSpec.from_dict(header["spec"])


def load_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())
