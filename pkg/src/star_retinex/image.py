"""Grids, HSV conversion, PNG/JPEG codecs and the raw float32 grid dump.

A grid is a 2-D ``float64`` array (row-major, H x W). An RGB image is an
``(H, W, 3)`` array with channels last. Hue is stored as a fraction of a turn.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import BinaryIO

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidInputError

RAW_MAGIC = b"STARF32\x00"
_HEADER = struct.Struct("<II")


def as_grid(g, name: str = "grid") -> np.ndarray:
    """Validate and convert to a finite 2-D float64 array."""
    a = np.asarray(g, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D grid, got shape {a.shape}")
    _check_finite(a, name)
    return a


def as_rgb(img, name: str = "image") -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInputError(f"{name} must have shape (H, W, 3), got {a.shape}")
    _check_finite(a, name)
    return a


def _check_finite(a: np.ndarray, name: str) -> None:
    bad = ~np.isfinite(a)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidInputError(f"{name} has a non-finite value at pixel index {idx}")


@dataclass(frozen=True)
class HsvImage:
    hue: np.ndarray
    saturation: np.ndarray
    value: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


def rgb_to_hsv(img) -> HsvImage:
    """Hexcone RGB -> HSV. Black pixels get S = 0, H = 0; gray pixels H = 0."""
    rgb = as_rgb(img)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=2)
    c = v - rgb.min(axis=2)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)

    h = np.zeros_like(v)
    chroma = c > 0
    safe_c = np.where(chroma, c, 1.0)
    # Branch order matters on ties: red wins over green over blue.
    is_r = chroma & (v == r)
    is_g = chroma & (v == g) & ~is_r
    is_b = chroma & ~is_r & ~is_g
    h[is_r] = ((g - b) / safe_c)[is_r] % 6.0
    h[is_g] = ((b - r) / safe_c)[is_g] + 2.0
    h[is_b] = ((r - g) / safe_c)[is_b] + 4.0
    h = h / 6.0
    h[h >= 1.0] -= 1.0
    return HsvImage(h, s, v)


def hsv_to_rgb(hsv: HsvImage) -> np.ndarray:
    h = as_grid(hsv.hue, "hue")
    s = as_grid(hsv.saturation, "saturation")
    v = as_grid(hsv.value, "value")
    if not (h.shape == s.shape == v.shape):
        raise InvalidInputError("HSV planes must share dimensions")
    if h.min() < 0.0 or h.max() >= 1.0:
        raise InvalidInputError("hue must lie in [0, 1)")
    if s.min() < 0.0 or s.max() > 1.0:
        raise InvalidInputError("saturation must lie in [0, 1]")

    h6 = h * 6.0
    sector = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    conds = [sector == i for i in range(6)]
    out = np.stack(
        [np.select(conds, choices_r), np.select(conds, choices_g), np.select(conds, choices_b)],
        axis=2,
    )
    return out


def replace_value_channel(hsv: HsvImage, v) -> HsvImage:
    v = as_grid(v, "value")
    if v.shape != hsv.shape:
        raise InvalidInputError(f"value plane shape {v.shape} does not match image {hsv.shape}")
    return replace(hsv, value=np.clip(v, 0.0, 1.0))


# --- codecs -----------------------------------------------------------------

def read_image(path) -> np.ndarray:
    """Decode an 8-bit PNG/JPEG into an (H, W, 3) float array in [0, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        data = np.asarray(im, dtype=np.uint8)
    return data.astype(np.float64) / 255.0


def to_uint8(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    return np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)


def write_image(path, img) -> None:
    a = to_uint8(img)
    mode = "L" if a.ndim == 2 else "RGB"
    Image.fromarray(a, mode=mode).save(path)


# --- raw float32 grid dump --------------------------------------------------

def write_raw_grid(g, sink: BinaryIO) -> None:
    a = np.asarray(g)
    if a.ndim != 2:
        raise InvalidInputError(f"raw dump needs a 2-D grid, got shape {a.shape}")
    h, w = a.shape
    if h >= 2**32 or w >= 2**32:
        raise FormatError("grid dimensions overflow u32")
    sink.write(RAW_MAGIC)
    sink.write(_HEADER.pack(h, w))
    sink.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_raw_grid(source: BinaryIO) -> np.ndarray:
    magic = source.read(len(RAW_MAGIC))
    if magic != RAW_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    header = source.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise FormatError("truncated header")
    h, w = _HEADER.unpack(header)
    if h == 0 or w == 0:
        raise FormatError(f"invalid dimensions {h}x{w}")
    n = h * w
    if n * 4 > 2**40:
        raise FormatError(f"dimensions {h}x{w} overflow the payload limit")
    payload = source.read(n * 4)
    if len(payload) != n * 4:
        raise FormatError(f"truncated payload: expected {n * 4} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float32)


def save_raw_grid(path, g) -> None:
    with open(path, "wb") as fh:
        write_raw_grid(g, fh)


def load_raw_grid(path) -> np.ndarray:
    with open(Path(path), "rb") as fh:
        return read_raw_grid(fh)
