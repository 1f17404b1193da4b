"""Synthetic test sequences and the on-disk sequence layout.

A sequence directory holds::

    frames/000.ppm ...   RGB frames
    frames.csv           index,t_us,file
    events.csv           t_us,x,y,p
    gt.csv               frame,x,y,w,h  (pixel boxes, top-left origin)
    sensor.txt           "<width> <height>"
    weights.apmt         initial weights (when generated with weights)
    config.toml          the config the weights were built for
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig, dump_config, load_config
from .events import EventStream, events_to_csv, read_events
from .pnm import decode_pnm, encode_pnm, read_pnm
from .weights import init_weights, save_bundle

WIDTH, HEIGHT = 160, 128
SQUARE = 24
FRAME_PERIOD_US = 40_000
EVENT_THRESHOLD = 0.1
SQUARE_COLOR = (0.95, 0.9, 0.85)


@dataclass
class Sequence:
    frames: list[np.ndarray]
    frame_times: list[int]
    events: EventStream
    gt: np.ndarray  # [N, 4]

    @property
    def init_bbox(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.gt[0])


def square_positions(n_frames: int, start=(40, 52), velocity=(6, 2)) -> list[tuple[int, int]]:
    return [(start[0] + i * velocity[0], start[1] + i * velocity[1]) for i in range(n_frames)]


def render_frames(seed: int, n_frames: int, velocity=(6, 2)) -> tuple[list[np.ndarray], np.ndarray]:
    """Frames quantised to 8 bits exactly as they are stored, plus ground-truth boxes."""
    rng = np.random.default_rng(seed)
    background = rng.uniform(0.15, 0.55, size=(HEIGHT, WIDTH, 3))
    frames, boxes = [], []
    for x, y in square_positions(n_frames, velocity=velocity):
        img = background.copy()
        img[y : y + SQUARE, x : x + SQUARE] = SQUARE_COLOR
        frames.append(decode_pnm(encode_pnm(img)))
        boxes.append((x, y, SQUARE, SQUARE))
    return frames, np.array(boxes, dtype=np.float64)


def synth_events(frames: list[np.ndarray], frame_times: list[int], seed: int) -> EventStream:
    """Frame differencing: one event per pixel whose intensity changes by at least the threshold."""
    rng = np.random.default_rng(seed + 1)
    cols: list[list[np.ndarray]] = [[], [], [], []]
    for i in range(1, len(frames)):
        diff = frames[i].mean(axis=2) - frames[i - 1].mean(axis=2)
        ys, xs = np.nonzero(np.abs(diff) >= EVENT_THRESHOLD)
        t0, t1 = frame_times[i - 1], frame_times[i]
        ts = rng.integers(t0, t1, size=len(xs))
        cols[0].append(ts)
        cols[1].append(xs)
        cols[2].append(ys)
        cols[3].append(np.sign(diff[ys, xs]).astype(np.int64))
    if not cols[0]:
        return EventStream.empty(WIDTH, HEIGHT)
    return EventStream.from_arrays(WIDTH, HEIGHT, *(np.concatenate(c) for c in cols))


def gen_fixtures(seed: int, out_dir, n_frames: int = 8, velocity=(6, 2), cfg: PipelineConfig | None = None, weights: bool = True) -> Path:
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    frames, boxes = render_frames(seed, n_frames, velocity)
    times = [(i + 1) * FRAME_PERIOD_US for i in range(n_frames)]
    events = synth_events(frames, times, seed)

    rows = []
    for i, img in enumerate(frames):
        name = f"frames/{i:03d}.ppm"
        (out / name).write_bytes(encode_pnm(img))
        rows.append(f"{i},{times[i]},{name}\n")
    (out / "frames.csv").write_text("index,t_us,file\n" + "".join(rows))
    (out / "events.csv").write_text(events_to_csv(events))
    (out / "gt.csv").write_text(
        "frame,x,y,w,h\n" + "".join(f"{i},{b[0]:g},{b[1]:g},{b[2]:g},{b[3]:g}\n" for i, b in enumerate(boxes))
    )
    (out / "sensor.txt").write_text(f"{WIDTH} {HEIGHT}\n")
    if weights:
        cfg = (cfg or PipelineConfig()).replace(seed=seed)
        (out / "config.toml").write_text(dump_config(cfg))
        save_bundle(init_weights(cfg), out / "weights.apmt")
    return out


def read_boxes(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r[k]) for k in ("x", "y", "w", "h")] for r in rows], dtype=np.float64)


def load_sequence(seq_dir) -> Sequence:
    d = Path(seq_dir)
    width, height = (int(v) for v in (d / "sensor.txt").read_text().split())
    with open(d / "frames.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    frames = [read_pnm(d / r["file"]) for r in rows]
    times = [int(r["t_us"]) for r in rows]
    ev_path = d / "events.bin" if (d / "events.bin").exists() else d / "events.csv"
    events = read_events(ev_path, width, height)
    return Sequence(frames, times, events, read_boxes(d / "gt.csv"))


def sequence_config(seq_dir, override=None) -> PipelineConfig:
    if override is not None:
        return load_config(override)
    path = Path(seq_dir) / "config.toml"
    return load_config(path if path.exists() else None)
