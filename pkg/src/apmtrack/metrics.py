"""Tracking metrics over a sequence of ``(x, y, w, h)`` pixel boxes.

* success: fraction of frames whose IoU reaches each threshold in 0, 0.05, ..., 1
* precision: fraction of frames whose centre error is within a pixel threshold
* normalised precision: centre error divided by the ground-truth diagonal,
  thresholds 0, 0.025, ..., 0.5

A frame counts at a threshold when its score is >= (IoU) or <= (distance) the
threshold, so a perfect track scores exactly 1 on every curve. AUCs are curve means.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

SR_THRESHOLDS = np.round(np.arange(21) * 0.05, 10)
PR_THRESHOLDS = np.arange(51, dtype=np.float64)
NPR_THRESHOLDS = np.round(np.arange(21) * 0.025, 10)
PR_DEFAULT = 20.0


def _boxes(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 4:
        raise ShapeError(f"expected [N, 4] boxes, got {a.shape}")
    return a


def iou_xywh(pred, gt) -> np.ndarray:
    p, g = _boxes(pred), _boxes(gt)
    x0 = np.maximum(p[:, 0], g[:, 0])
    y0 = np.maximum(p[:, 1], g[:, 1])
    x1 = np.minimum(p[:, 0] + p[:, 2], g[:, 0] + g[:, 2])
    y1 = np.minimum(p[:, 1] + p[:, 3], g[:, 1] + g[:, 3])
    inter = np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)
    union = p[:, 2] * p[:, 3] + g[:, 2] * g[:, 3] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def center_error(pred, gt) -> np.ndarray:
    p, g = _boxes(pred), _boxes(gt)
    dc = (p[:, :2] + p[:, 2:] / 2) - (g[:, :2] + g[:, 2:] / 2)
    return np.hypot(dc[:, 0], dc[:, 1])


@dataclass(frozen=True)
class Metrics:
    iou: np.ndarray
    center_error: np.ndarray
    sr_curve: np.ndarray
    sr_auc: float
    pr_curve: np.ndarray
    pr: float
    npr_curve: np.ndarray
    npr_auc: float

    def success_at(self, threshold: float) -> float:
        return float(np.mean(self.iou >= threshold))

    def summary(self) -> dict[str, float]:
        return {
            "SR_AUC": self.sr_auc,
            "SR@0.5": self.success_at(0.5),
            "PR@20": self.pr,
            "NPR_AUC": self.npr_auc,
        }


def compute_metrics(pred, gt, pr_threshold: float = PR_DEFAULT) -> Metrics:
    p, g = _boxes(pred), _boxes(gt)
    if p.shape[0] != g.shape[0]:
        raise ShapeError(f"{p.shape[0]} predicted boxes vs {g.shape[0]} ground-truth boxes")
    if p.shape[0] == 0:
        raise ShapeError("empty sequence")
    iou = iou_xywh(p, g)
    err = center_error(p, g)
    norm_err = err / np.hypot(g[:, 2], g[:, 3])
    sr = np.array([np.mean(iou >= t) for t in SR_THRESHOLDS])
    pr = np.array([np.mean(err <= t) for t in PR_THRESHOLDS])
    npr = np.array([np.mean(norm_err <= t) for t in NPR_THRESHOLDS])
    return Metrics(
        iou=iou,
        center_error=err,
        sr_curve=sr,
        sr_auc=float(sr.mean()),
        pr_curve=pr,
        pr=float(np.mean(err <= pr_threshold)),
        npr_curve=npr,
        npr_auc=float(npr.mean()),
    )
