"""Centre-based tracking head and its training losses (forward only)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .motion import ConvBN
from .numerics import relu, sigmoid

LOG_EPS = 1e-12
FOCAL_ALPHA = 2
FOCAL_GAMMA = 4
OFFSET_LIMIT = 0.5
LOSS_WEIGHTS = (1.0, 5.0, 2.0)


@dataclass(frozen=True)
class BBox:
    """Centre-size box. Normalised to the search region when produced by the head."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ParameterError(f"box needs positive size, got w={self.w} h={self.h}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(x + w / 2, y + h / 2, w, h)

    def xywh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.w, self.h)

    def xyxy(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)


@dataclass(frozen=True)
class HeadBranch:
    hidden: ConvBN  # C -> C/2, then ReLU
    out: ConvBN  # C/2 -> out channels, no ReLU so the terminal activation sees signed logits

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.out(relu(self.hidden(x)))


@dataclass(frozen=True)
class HeadWeights:
    cls: HeadBranch
    offset: HeadBranch
    size: HeadBranch


@dataclass(frozen=True)
class TrackOutput:
    cls: np.ndarray  # [G, G]
    offset: np.ndarray  # [G, G, 2]
    size: np.ndarray  # [G, G, 2]
    bbox: BBox


def extract_bbox(cls: np.ndarray, offset: np.ndarray, size: np.ndarray) -> BBox:
    """Box at the classification peak (first in row-major order on ties)."""
    g_h, g_w = cls.shape
    i, j = divmod(int(np.argmax(cls)), g_w)
    off_x, off_y = offset[i, j]
    w, h = size[i, j]
    return BBox((j + 0.5 + off_x) / g_w, (i + 0.5 + off_y) / g_h, float(w), float(h))


def head_forward(x: np.ndarray, w: HeadWeights) -> TrackOutput:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"head expects [G, G, C] features, got {x.shape}")
    cls = sigmoid(w.cls(x))[:, :, 0]
    offset = np.clip(w.offset(x), -OFFSET_LIMIT, OFFSET_LIMIT)
    size = sigmoid(w.size(x))
    return TrackOutput(cls, offset, size, extract_bbox(cls, offset, size))


def giou(a: BBox, b: BBox) -> float:
    ax0, ay0, ax1, ay1 = a.xyxy()
    bx0, by0, bx1, by1 = b.xyxy()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    enclose = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    return inter / union - (enclose - union) / enclose


def giou_loss(pred: BBox, gt: BBox) -> float:
    return 1.0 - giou(pred, gt)


def gaussian_heatmap(shape: tuple[int, int], center: tuple[int, int], sigma: float = 1.0) -> np.ndarray:
    """Target map with exactly one cell equal to 1 at ``center`` (row, col)."""
    rows, cols = np.indices(shape)
    r, c = center
    heat = np.exp(-((rows - r) ** 2 + (cols - c) ** 2) / (2 * sigma**2))
    heat[r, c] = 1.0
    return heat


def focal_loss(cls: np.ndarray, target: np.ndarray) -> float:
    """Heatmap focal loss, summed and divided by the number of positive cells."""
    p = np.asarray(cls, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    pos = t == 1.0
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise ParameterError("target heatmap has no positive cell")
    pos_loss = -((1 - p[pos]) ** FOCAL_ALPHA) * np.log(np.maximum(p[pos], LOG_EPS))
    neg = ~pos
    neg_loss = -((1 - t[neg]) ** FOCAL_GAMMA) * p[neg] ** FOCAL_ALPHA * np.log(np.maximum(1 - p[neg], LOG_EPS))
    return float((pos_loss.sum() + neg_loss.sum()) / n_pos)


def l1_loss(pred, gt) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    return float(np.mean(np.abs(pred - gt)))


def total_loss(focal: float, l1: float, giou_term: float, weights=LOSS_WEIGHTS) -> float:
    w1, w2, w3 = weights
    return w1 * focal + w2 * l1 + w3 * giou_term


@dataclass(frozen=True)
class LossBreakdown:
    focal: float
    l1: float
    giou: float
    total: float


def frame_losses(out: TrackOutput, gt: BBox, weights=LOSS_WEIGHTS) -> LossBreakdown:
    """Losses of one head output against a ground-truth box in normalised search coordinates."""
    g_h, g_w = out.cls.shape
    col = min(max(int(math.floor(gt.cx * g_w)), 0), g_w - 1)
    row = min(max(int(math.floor(gt.cy * g_h)), 0), g_h - 1)
    target = gaussian_heatmap((g_h, g_w), (row, col))
    f = focal_loss(out.cls, target)
    pred_reg = [*out.offset[row, col], *out.size[row, col]]
    gt_reg = [gt.cx * g_w - col - 0.5, gt.cy * g_h - row - 0.5, gt.w, gt.h]
    l1 = l1_loss(pred_reg, gt_reg)
    g = giou_loss(out.bbox, gt)
    return LossBreakdown(f, l1, g, total_loss(f, l1, g, weights))
