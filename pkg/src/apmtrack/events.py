"""Event streams: parsing, time slicing, voxel rasterisation and region cropping.

Two on-disk formats are supported:

* CSV, one event per line: ``t_us,x,y,p`` with ``p`` in {-1, 1}. An optional
  ``t_us,x,y,p`` header line and blank lines are skipped.
* ``EVT0`` binary: 16-byte header (magic ``b"EVT0"``, u32 width, u32 height,
  u32 reserved) followed by packed little-endian 13-byte records
  ``u64 t_us, u16 x, u16 y, i8 p``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ParameterError, ParseError, ShapeError
from .numerics import bilinear_resize

EVT_MAGIC = b"EVT0"
EVT_HEADER = struct.Struct("<4sIII")
EVT_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
assert EVT_RECORD.itemsize == 13


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class EventStream:
    """Column-oriented event storage, sorted by timestamp."""

    width: int
    height: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    @classmethod
    def from_arrays(cls, width, height, t, x, y, p, validate: bool = True) -> "EventStream":
        t = np.asarray(t, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        p = np.asarray(p, dtype=np.int64)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ShapeError("event columns have different lengths")
        if validate:
            if np.any((p != 1) & (p != -1)):
                bad = int(np.flatnonzero((p != 1) & (p != -1))[0])
                raise ValueError(f"event {bad}: polarity must be -1 or 1, got {p[bad]}")
            if np.any(t < 0):
                raise ValueError("negative timestamp")
        if len(t) and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
            t, x, y, p = t[order], x[order], y[order], p[order]
        return cls(int(width), int(height), t, x, y, p)

    @classmethod
    def from_events(cls, width: int, height: int, events) -> "EventStream":
        events = list(events)
        cols = list(zip(*events)) if events else ([], [], [], [])
        return cls.from_arrays(width, height, *cols)

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        return cls.from_arrays(width, height, [], [], [], [])

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(*row)

    def __getitem__(self, sel) -> "EventStream":
        return EventStream(self.width, self.height, self.t[sel], self.x[sel], self.y[sel], self.p[sel])

    def in_bounds(self) -> np.ndarray:
        return (self.x >= 0) & (self.x < self.width) & (self.y >= 0) & (self.y < self.height)


def _parse_csv(text: str, width: int, height: int) -> EventStream:
    cols: list[list[int]] = [[], [], [], []]
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if lineno == 1 and line.replace(" ", "") == "t_us,x,y,p":
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise ParseError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            t, x, y, p = (int(f) for f in fields)
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer field in {line!r}") from None
        if p not in (-1, 1):
            raise ValueError(f"line {lineno}: polarity must be -1 or 1, got {p}")
        if not (0 <= x < width and 0 <= y < height):
            raise ValueError(f"line {lineno}: pixel ({x}, {y}) outside {width}x{height} sensor")
        if t < 0:
            raise ValueError(f"line {lineno}: negative timestamp {t}")
        for col, v in zip(cols, (t, x, y, p)):
            col.append(v)
    return EventStream.from_arrays(width, height, *cols, validate=False)


def _parse_bin(data: bytes) -> EventStream:
    if len(data) < EVT_HEADER.size:
        raise ParseError(f"offset 0: truncated header ({len(data)} bytes)")
    magic, width, height, _reserved = EVT_HEADER.unpack_from(data)
    if magic != EVT_MAGIC:
        raise ParseError(f"offset 0: bad magic {magic!r}")
    body = len(data) - EVT_HEADER.size
    if body % EVT_RECORD.itemsize:
        bad = EVT_HEADER.size + (body // EVT_RECORD.itemsize) * EVT_RECORD.itemsize
        raise ParseError(f"offset {bad}: truncated record")
    rec = np.frombuffer(data, dtype=EVT_RECORD, offset=EVT_HEADER.size)
    p = rec["p"].astype(np.int64)
    bad_p = np.flatnonzero((p != 1) & (p != -1))
    if bad_p.size:
        off = EVT_HEADER.size + int(bad_p[0]) * EVT_RECORD.itemsize
        raise ValueError(f"offset {off}: polarity must be -1 or 1, got {p[bad_p[0]]}")
    x = rec["x"].astype(np.int64)
    y = rec["y"].astype(np.int64)
    oob = np.flatnonzero((x >= width) | (y >= height))
    if oob.size:
        off = EVT_HEADER.size + int(oob[0]) * EVT_RECORD.itemsize
        raise ValueError(f"offset {off}: pixel ({x[oob[0]]}, {y[oob[0]]}) outside {width}x{height} sensor")
    t = rec["t"]
    if np.any(t > np.iinfo(np.int64).max):
        raise ParseError("timestamp overflows int64")
    return EventStream.from_arrays(width, height, t.astype(np.int64), x, y, p, validate=False)


def parse_events(data: bytes | str, fmt: str, width: int | None = None, height: int | None = None) -> EventStream:
    """Parse an event file body.

    CSV carries no geometry, so ``width``/``height`` are required for it; the
    binary format reads them from its header.
    """
    if fmt == "csv":
        if width is None or height is None:
            raise ParameterError("csv events need an explicit sensor width and height")
        text = data.decode("ascii") if isinstance(data, (bytes, bytearray)) else data
        return _parse_csv(text, width, height)
    if fmt == "bin":
        if isinstance(data, str):
            raise ParameterError("binary events must be bytes")
        return _parse_bin(bytes(data))
    raise ParameterError(f"unknown event format {fmt!r}")


def events_to_csv(stream: EventStream) -> str:
    return "".join(f"{t},{x},{y},{p}\n" for t, x, y, p in stream)


def events_to_bin(stream: EventStream) -> bytes:
    rec = np.empty(len(stream), dtype=EVT_RECORD)
    rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
    return EVT_HEADER.pack(EVT_MAGIC, stream.width, stream.height, 0) + rec.tobytes()


def read_events(path, width: int | None = None, height: int | None = None) -> EventStream:
    path = str(path)
    fmt = "bin" if path.endswith((".bin", ".evt")) else "csv"
    with open(path, "rb") as fh:
        return parse_events(fh.read(), fmt, width, height)


def slice_window(stream: EventStream, t0: int, t1: int) -> EventStream:
    """Events with ``t0 <= t < t1``."""
    if t0 > t1:
        raise ParameterError(f"window start {t0} after end {t1}")
    lo = np.searchsorted(stream.t, t0, side="left")
    hi = np.searchsorted(stream.t, t1, side="left")
    return stream[lo:hi]


@dataclass(frozen=True)
class VoxelGrid:
    data: np.ndarray  # [B, H, W]

    @property
    def bins(self) -> int:
        return self.data.shape[0]


def voxelize(window: EventStream, bins: int, t0: float, t1: float) -> VoxelGrid:
    """Rasterise events into ``bins`` temporal bins with a triangular kernel.

    Each event lands on its own pixel and splits its polarity between the two
    bins adjacent to its normalised time ``(t - t0) / (t1 - t0) * (bins - 1)``.
    """
    if bins < 2:
        raise ParameterError(f"need at least 2 bins, got {bins}")
    if not t1 > t0:
        raise ParameterError(f"empty time range [{t0}, {t1})")
    grid = np.zeros((bins, window.height, window.width), dtype=np.float64)
    if len(window) == 0:
        return VoxelGrid(grid)
    if not np.all(window.in_bounds()):
        bad = int(np.flatnonzero(~window.in_bounds())[0])
        raise ValueError(
            f"event {bad} at ({window.x[bad]}, {window.y[bad]}) outside "
            f"{window.width}x{window.height} sensor"
        )
    tn = (window.t.astype(np.float64) - t0) / (t1 - t0) * (bins - 1)
    lower = np.floor(tn).astype(np.int64)
    frac = tn - lower
    pol = window.p.astype(np.float64)
    for b, w in ((lower, 1.0 - frac), (lower + 1, frac)):
        keep = (b >= 0) & (b < bins) & (w > 0)
        np.add.at(grid, (b[keep], window.y[keep], window.x[keep]), pol[keep] * w[keep])
    return VoxelGrid(grid)


@dataclass(frozen=True)
class RegionCrop:
    """A square crop resized to ``size x size``.

    ``origin`` is the top-left corner of the crop square in source pixels and
    ``side`` its length; ``scale = size / side`` maps source lengths to crop
    lengths.
    """

    pixels: np.ndarray  # [S, S, C]
    origin: tuple[float, float]
    side: float
    scale: float

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    def to_source(self, cx: float, cy: float) -> tuple[float, float]:
        return self.origin[0] + cx / self.scale, self.origin[1] + cy / self.scale


def crop_square(bbox, factor: float) -> tuple[int, int, int]:
    """Integer crop square ``(x0, y0, side)`` for an ``(x, y, w, h)`` box."""
    x, y, w, h = (float(v) for v in bbox)
    if not (w > 0 and h > 0):
        raise ParameterError(f"degenerate bbox {tuple(bbox)}")
    if not factor > 0:
        raise ParameterError(f"crop factor must be positive, got {factor}")
    side = max(1, math.ceil(math.sqrt(w * h) * factor - 1e-9))
    x0 = math.floor(x + 0.5 * w - 0.5 * side + 0.5)
    y0 = math.floor(y + 0.5 * h - 0.5 * side + 0.5)
    return x0, y0, side


def crop_region(img: np.ndarray, bbox, factor: float, out_size: int, fill: str | float = "mean") -> RegionCrop:
    """Crop a square of side ``factor * sqrt(w*h)`` centred on ``bbox`` and resize it.

    ``img`` is ``[H, W, C]``. Pixels outside the frame take ``fill``: ``"mean"``
    uses the per-channel mean of the in-frame part of the crop (RGB), a number
    is used verbatim (0 for event voxels).
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ShapeError(f"crop expects [H, W, C], got {img.shape}")
    H, W, C = img.shape
    x0, y0, side = crop_square(bbox, factor)
    xa, ya = max(x0, 0), max(y0, 0)
    xb, yb = min(x0 + side, W), min(y0 + side, H)
    inside = img[ya:yb, xa:xb] if (xb > xa and yb > ya) else np.zeros((0, 0, C))
    if isinstance(fill, str):
        if fill != "mean":
            raise ParameterError(f"unknown fill {fill!r}")
        fill_value = inside.reshape(-1, C).mean(axis=0) if inside.size else np.zeros(C)
    else:
        fill_value = np.full(C, float(fill))
    patch = np.empty((side, side, C), dtype=np.float64)
    patch[...] = fill_value
    if inside.size:
        patch[ya - y0 : yb - y0, xa - x0 : xb - x0] = inside
    pixels = bilinear_resize(patch, out_size, out_size)
    return RegionCrop(pixels, (float(x0), float(y0)), float(side), out_size / side)
