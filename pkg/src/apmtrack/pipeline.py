"""Frame-by-frame forward tracking.

Per frame: crop the search region around the previous box from the RGB frame
and from the frame's event voxel grid, fuse and embed it, derive motion
tokens, pick the search tokens to keep, run the backbone on template + kept
search tokens, add back score-weighted motion tokens, zero-fill the dropped
positions and decode a box with the head.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import backbone_forward, load_layers
from .config import PipelineConfig
from .diff_attn import diff_fft_block
from .errors import ParameterError, ShapeError
from .events import EventStream, crop_region, slice_window, voxelize
from .flops import FlopsReport, flops_report
from .fusion import dapa_fuse, patch_embed
from .head import BBox, LossBreakdown, TrackOutput, frame_losses, head_forward
from .mgss import SparsePlan, adaptive_k, fuse_and_scatter, random_drop, score_estimate, topk_indices
from .motion import motion_tokens
from .weights import (
    WeightBundle,
    dapa_weights,
    diff_weights,
    encoder_weights,
    head_weights,
    mgss_weights,
)

MIN_BOX = 1.0


@dataclass(frozen=True)
class FrameResult:
    index: int
    bbox: tuple[float, float, float, float]  # x, y, w, h in image pixels
    output: TrackOutput | None = None
    plan: SparsePlan | None = None
    scores: np.ndarray | None = None
    backbone_tokens: int = 0
    losses: LossBreakdown | None = None


@dataclass(frozen=True)
class TrackResult:
    frames: list[FrameResult]
    flops: FlopsReport

    def trajectory(self) -> np.ndarray:
        return np.array([f.bbox for f in self.frames], dtype=np.float64)


def event_window(frame_times, index: int, window_us: int | None) -> tuple[int, int]:
    t1 = int(frame_times[index])
    if window_us is None:
        if len(frame_times) < 2:
            raise ParameterError("a single frame needs an explicit event window length")
        window_us = int(np.median(np.diff(np.asarray(frame_times, dtype=np.int64))))
    return t1 - window_us, t1


class Tracker:
    def __init__(self, cfg: PipelineConfig, weights: WeightBundle):
        weights.check(cfg)
        self.cfg = cfg
        self.dapa = dapa_weights(weights)
        self.embed = {
            k: (weights[f"embed.{k}.proj"], weights[f"embed.{k}.bias"]) for k in ("fused", "rgb", "evt")
        }
        self.encoder = encoder_weights(weights)
        self.diff = diff_weights(weights, cfg)
        self.mgss = mgss_weights(weights)
        self.backbone = load_layers(weights, cfg.backbone_depth)
        self.head = head_weights(weights)
        self.rng = np.random.default_rng(cfg.seed)
        self._template = None

    # region encoding -----------------------------------------------------

    def region_tokens(self, rgb: np.ndarray, evt: np.ndarray) -> list[np.ndarray]:
        """Token sequences for one region: one fused sequence, or RGB and event for concat."""
        cfg = self.cfg
        if cfg.fusion == "dapa":
            fused = dapa_fuse(rgb, evt, self.dapa, cfg.sigma_hp_for(rgb.shape[0]))
            return [patch_embed(fused, *self.embed["fused"], patch=cfg.patch).tokens]
        rgb_tok = patch_embed(rgb, *self.embed["rgb"], patch=cfg.patch).tokens
        evt_tok = patch_embed(evt, *self.embed["evt"], patch=cfg.patch).tokens
        if cfg.fusion == "add":
            return [rgb_tok + evt_tok]
        return [rgb_tok, evt_tok]

    def _crops(self, frame: np.ndarray, voxels: np.ndarray, bbox, factor: float, size: int):
        rgb = crop_region(frame, bbox, factor, size, fill="mean")
        evt = crop_region(voxels.transpose(1, 2, 0), bbox, factor, size, fill=0.0)
        return rgb, evt

    def initialize(self, frame: np.ndarray, voxels: np.ndarray, bbox) -> None:
        cfg = self.cfg
        rgb, evt = self._crops(frame, voxels, bbox, cfg.template_factor, cfg.template_size)
        self._template = {
            "tokens": self.region_tokens(rgb.pixels, evt.pixels),
            "voxels": evt.pixels.transpose(2, 0, 1),
        }

    # per-frame step ------------------------------------------------------

    def _plan(self, scores: np.ndarray) -> SparsePlan:
        cfg = self.cfg
        k, var, x = adaptive_k(scores, cfg.kmin, cfg.kmax, cfg.beta, cfg.decay)
        if cfg.sparsify == "none":
            return SparsePlan(cfg.n_x, np.arange(cfg.n_x), var, x)
        if cfg.sparsify == "random":
            return SparsePlan(k, random_drop(cfg.n_x, k, self.rng), var, x)
        return SparsePlan(k, topk_indices(scores, k), var, x)

    def step(self, frame: np.ndarray, voxels: np.ndarray, prev_bbox):
        if self._template is None:
            raise ParameterError("tracker used before initialize()")
        cfg = self.cfg
        rgb, evt = self._crops(frame, voxels, prev_bbox, cfg.search_factor, cfg.search_size)
        x_tokens = self.region_tokens(rgb.pixels, evt.pixels)
        z_tokens = self._template["tokens"]
        n_z, n_x, g = cfg.n_z, cfg.n_x, cfg.grid_x

        if cfg.fusion == "concat":
            seq = np.concatenate([z_tokens[0], x_tokens[0], z_tokens[1], x_tokens[1]])
            out = backbone_forward(seq, self.backbone, cfg.backbone_heads)
            search = out[n_z : n_z + n_x] + out[2 * n_z + n_x :]
            plan = SparsePlan(n_x, np.arange(n_x), 0.0, 0.0)
            scores = None
        else:
            motion = motion_tokens(
                self._template["voxels"], evt.pixels.transpose(2, 0, 1), self.encoder, cfg.grid_z, g, cfg.stride
            )
            d = np.concatenate([motion.template, motion.search])
            for layer in self.diff:
                d = diff_fft_block(d, layer, cfg.attn)
            motion_x = d[n_z:]
            scores = score_estimate(motion_x, self.mgss)
            plan = self._plan(scores)
            seq = np.concatenate([z_tokens[0], x_tokens[0][plan.indices]])
            out = backbone_forward(seq, self.backbone, cfg.backbone_heads)
            search = fuse_and_scatter(out[n_z:], motion_x, scores, plan)

        output = head_forward(search.reshape(g, g, -1), self.head)
        return output, plan, scores, seq.shape[0], rgb


def _to_image_box(box: BBox, crop, width: int, height: int) -> tuple[float, float, float, float]:
    cx, cy = crop.to_source(box.cx * crop.size, box.cy * crop.size)
    w = min(max(box.w * crop.side, MIN_BOX), float(width))
    h = min(max(box.h * crop.side, MIN_BOX), float(height))
    cx = min(max(cx, 0.0), float(width))
    cy = min(max(cy, 0.0), float(height))
    return (cx - w / 2, cy - h / 2, w, h)


def _to_crop_box(xywh, crop) -> BBox:
    x, y, w, h = xywh
    ox, oy = crop.origin
    return BBox((x + w / 2 - ox) / crop.side, (y + h / 2 - oy) / crop.side, w / crop.side, h / crop.side)


def frame_voxels(events: EventStream, frame_times, index: int, cfg: PipelineConfig) -> np.ndarray:
    t0, t1 = event_window(frame_times, index, cfg.window_us)
    return voxelize(slice_window(events, t0, t1), cfg.bins, t0, t1).data


def track_forward(
    frames,
    events: EventStream,
    init_bbox,
    cfg: PipelineConfig,
    weights: WeightBundle,
    frame_times,
    gt=None,
) -> TrackResult:
    """Track through ``frames`` starting from ``init_bbox`` (x, y, w, h) on frame 0."""
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if not frames:
        raise ParameterError("no frames")
    if frame_times is None or len(frame_times) != len(frames):
        raise ParameterError("every frame needs a timestamp to define its event window")
    H, W = frames[0].shape[:2]
    if (events.height, events.width) != (H, W):
        raise ShapeError(f"event sensor {events.width}x{events.height} does not match frames {W}x{H}")
    if gt is not None and len(gt) != len(frames):
        raise ShapeError(f"{len(gt)} ground-truth boxes for {len(frames)} frames")
    bbox = tuple(float(v) for v in init_bbox)
    if not (bbox[2] > 0 and bbox[3] > 0):
        raise ParameterError(f"degenerate initial box {bbox}")

    tracker = Tracker(cfg, weights)
    tracker.initialize(frames[0], frame_voxels(events, frame_times, 0, cfg), bbox)
    results = [FrameResult(0, bbox)]
    for i in range(1, len(frames)):
        output, plan, scores, n_tok, crop = tracker.step(frames[i], frame_voxels(events, frame_times, i, cfg), bbox)
        bbox = _to_image_box(output.bbox, crop, W, H)
        losses = None
        if gt is not None:
            losses = frame_losses(output, _to_crop_box(gt[i], crop), cfg.loss_weights)
        results.append(FrameResult(i, bbox, output, plan, scores, n_tok, losses))
    plans = [r.plan for r in results[1:]]
    return TrackResult(results, flops_report(cfg, plans))
