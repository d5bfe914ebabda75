"""Binary PGM (P5) output for grayscale reconstructions.

Zero-dependency, bit-exact image artifact: header "P5\\n<width> <height>\\n255\\n"
followed by row-major 8-bit pixels, where a pixel is round(255 * value).
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataFormatError, ShapeError


def to_bytes(image: np.ndarray) -> bytes:
    """Encode a 2-d float image with values in [0, 1] as a P5 PGM."""
    if image.ndim != 2:
        raise ShapeError(f"PGM encoding expects a 2-d image, got shape {image.shape}")
    if not np.isfinite(image).all():
        raise ShapeError("PGM encoding expects finite pixel values")
    h, w = image.shape
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write(path: str, image: np.ndarray) -> None:
    data = to_bytes(image)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def strip(images: list[np.ndarray]) -> np.ndarray:
    """Concatenate same-height images left to right into one strip."""
    if not images:
        raise ShapeError("cannot build a strip from zero images")
    heights = {im.shape[0] for im in images}
    if len(heights) != 1:
        raise ShapeError(f"strip images must share a height, got {sorted(heights)}")
    return np.concatenate(images, axis=1)


def read(path: str):
    """Decode a P5 PGM back to (image array in [0, 1], width, height)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5\n"):
        raise DataFormatError(f"{path}: not a binary PGM (P5) file")
    parts = raw.split(b"\n", 3)
    if len(parts) < 4:
        raise DataFormatError(f"{path}: truncated PGM header")
    dims = parts[1].split()
    if len(dims) != 2 or parts[2] != b"255":
        raise DataFormatError(f"{path}: unsupported PGM header {parts[1]!r} / {parts[2]!r}")
    w, h = int(dims[0]), int(dims[1])
    body = parts[3]
    if len(body) != w * h:
        raise DataFormatError(f"{path}: PGM body holds {len(body)} bytes, {w * h} expected")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    return pixels.astype(np.float32) / 255.0, w, h
