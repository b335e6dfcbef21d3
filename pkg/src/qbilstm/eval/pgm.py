"""Binary PGM (P5) text-line images."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import ImageFormatError

PIXEL_SCALE = 256.0


@dataclass(frozen=True, eq=False)
class TextLineImage:
    """A grey-scale text line as C columns of I pixels, normalized to [0, 1)."""

    columns: np.ndarray

    @property
    def width(self) -> int:
        return self.columns.shape[0]

    @property
    def height(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def from_pixels(cls, pixels) -> "TextLineImage":
        """From an 8-bit (height x width) raster."""
        p = np.asarray(pixels)
        if p.ndim != 2:
            raise ImageFormatError(f"pixel raster must be 2-D, got shape {p.shape}")
        return cls(np.ascontiguousarray(p.T, dtype=np.float64) / PIXEL_SCALE)

    def to_pixels(self) -> np.ndarray:
        return np.clip(np.rint(self.columns.T * PIXEL_SCALE), 0, 255).astype(np.uint8)


def _header_tokens(data: bytes, path):
    """Yield (token, end_offset) for the first four header fields, skipping comments."""
    tokens = []
    i, n = 0, len(data)
    while len(tokens) < 4:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            field = ("magic", "width", "height", "maxval")[len(tokens)]
            raise ImageFormatError(f"{path}: truncated header, missing {field}")
        tokens.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        raise ImageFormatError(f"{path}: maxval must be followed by a single whitespace byte")
    return tokens, i + 1


def load_image(path, height: int | None = None) -> TextLineImage:
    """Read a P5 PGM with maxval 255; pixel p maps to p/256."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), offset = _header_tokens(data, path)
    if magic != b"P5":
        raise ImageFormatError(f"{path}: magic must be P5, got {magic!r}")
    try:
        width, rows, mv = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError(f"{path}: non-numeric width/height/maxval in header") from None
    if width < 0 or rows < 1:
        raise ImageFormatError(f"{path}: invalid size {width}x{rows}")
    if mv != 255:
        raise ImageFormatError(f"{path}: maxval must be 255, got {mv}")
    if height is not None and rows != height:
        raise ImageFormatError(f"{path}: height is {rows} pixels, model expects {height}")
    payload = data[offset:]
    if len(payload) < width * rows:
        raise ImageFormatError(f"{path}: truncated payload, {len(payload)} of {width * rows} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8, count=width * rows).reshape(rows, width)
    return TextLineImage.from_pixels(pixels)


def save_image(path, image: TextLineImage) -> None:
    pixels = image.to_pixels()
    rows, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def image_files(directory) -> list[str]:
    return sorted(f for f in os.listdir(directory) if f.lower().endswith(".pgm"))
