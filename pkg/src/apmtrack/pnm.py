"""8-bit binary PGM (P5) / PPM (P6) reading and writing."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    out: list[bytes] = []
    i = 0
    while len(out) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
            j += 1
        if j == i:
            raise ParseError("truncated PNM header")
        out.append(data[i:j])
        i = j
    return out, i + 1  # exactly one whitespace byte ends the header


def decode_pnm(data: bytes) -> np.ndarray:
    """Returns ``[H, W, C]`` floats in [0, 1] (C = 1 for PGM, 3 for PPM)."""
    (magic, w, h, maxval), off = _tokens(data, 4)
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"unsupported PNM type {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 256:
        raise ParseError(f"only 8-bit images are supported, maxval={maxval}")
    c = 3 if magic == b"P6" else 1
    n = w * h * c
    if len(data) - off < n:
        raise ParseError("truncated PNM payload")
    pix = np.frombuffer(data, dtype=np.uint8, count=n, offset=off).reshape(h, w, c)
    return pix.astype(np.float64) / maxval


def encode_pnm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    if c not in (1, 3):
        raise ValueError(f"PNM needs 1 or 3 channels, got {c}")
    pix = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    magic = "P6" if c == 3 else "P5"
    return f"{magic}\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def read_pnm(path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())


def write_pnm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_pnm(img))
