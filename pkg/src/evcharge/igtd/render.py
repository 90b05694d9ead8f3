"""Per-row image rendering, zero padding and binary PGM I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, NotNormalized
from ..preprocess import EncodedMatrix
from .distances import PixelGrid


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray  # (ni, nj) uint8
    label: int
    row_id: int


def pad_features(x: EncodedMatrix, target_n: int) -> EncodedMatrix:
    n = x.values.shape[1]
    if target_n < n:
        raise ValueError(f"cannot pad {n} features down to {target_n}")
    existing = sum(1 for c in x.column_names if c.startswith("_pad_"))
    extra = target_n - n
    if extra == 0:
        return x
    names = tuple(x.column_names) + tuple(f"_pad_{existing + k}" for k in range(extra))
    values = np.hstack([x.values, np.zeros((x.values.shape[0], extra))])
    return EncodedMatrix(values, x.row_ids, names, x.labels)


def intensities(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255, rounding halves up."""
    return np.floor(values * 255.0 + 0.5).astype(np.uint8)


def render_pixels(values: np.ndarray, perm: np.ndarray, grid: PixelGrid) -> np.ndarray:
    """Stack of (rows, ni, nj) uint8 images for a value matrix."""
    values = np.asarray(values, dtype=np.float64)
    if values.size and (not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0):
        raise NotNormalized("rendering needs every value in [0, 1]")
    m, n = values.shape
    if n > grid.size or len(perm) < n:
        raise ValueError(f"{n} features do not fit a {grid.ni}x{grid.nj} grid")
    flat = np.zeros((m, grid.size), dtype=np.uint8)
    flat[:, np.asarray(perm[:n], dtype=np.int64)] = intensities(values)
    return flat.reshape(m, grid.ni, grid.nj)


def render_images(x: EncodedMatrix, a, grid: PixelGrid) -> list[ImageSample]:
    perm = np.asarray(getattr(a, "perm", a), dtype=np.int64)
    stack = render_pixels(x.values, perm, grid)
    return [ImageSample(stack[k], int(x.labels[k]), int(x.row_ids[k])) for k in range(len(stack))]


def pgm_bytes(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
        raise ValueError("PGM pixels must lie in 0..255")
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.astype(np.uint8).tobytes()


def write_pgm(img, path) -> None:
    Path(path).write_bytes(pgm_bytes(getattr(img, "pixels", img)))


def _header_tokens(data: bytes, count: int):
    """Whitespace-separated header tokens (skipping # comments) and payload offset."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def parse_pgm(data: bytes) -> np.ndarray:
    tokens, offset = _header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("malformed PGM header") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    payload = data[offset:offset + w * h]
    if len(payload) != w * h:
        raise FormatError("truncated PGM raster")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def read_pgm(path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def write_image_dir(images, out_dir) -> Path:
    """One PGM per image plus ``manifest.csv`` (filename,label,row_id)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(6, len(str(max((im.row_id for im in images), default=0))))
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename", "label", "row_id"])
        for im in images:
            name = f"img_{im.row_id:0{width}d}.pgm"
            write_pgm(im, out_dir / name)
            w.writerow([name, im.label, im.row_id])
    return manifest


def read_image_dir(out_dir) -> list[ImageSample]:
    out_dir = Path(out_dir)
    with open(out_dir / "manifest.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ImageSample(read_pgm(out_dir / r["filename"]), int(r["label"]), int(r["row_id"]))
            for r in rows]
