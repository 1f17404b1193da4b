import math

import numpy as np
import pytest

from apmtrack.config import PipelineConfig
from apmtrack.errors import ShapeError
from apmtrack.flops import (
    attention_flops,
    backbone_flops,
    backbone_tokens,
    conv_flops,
    fft1_flops,
    fft2_flops,
    flops_report,
    linear_flops,
)
from apmtrack.metrics import NPR_THRESHOLDS, SR_THRESHOLDS, center_error, compute_metrics, iou_xywh

GT = np.array([[0.0, 0.0, 10.0, 10.0]] * 4)
# horizontal shifts giving IoU 1, 0.6, 0.4 and 0 against a 10x10 box
SHIFTS = [0.0, 2.5, 30 / 7, 30.0]


def four_frame_pred():
    p = GT.copy()
    p[:, 0] += SHIFTS
    return p


class TestMetrics:
    def test_hand_case(self):
        m = compute_metrics(four_frame_pred(), GT)
        np.testing.assert_allclose(m.iou, [1.0, 0.6, 0.4, 0.0], atol=1e-12)
        np.testing.assert_allclose(m.center_error, SHIFTS, atol=1e-12)
        assert m.success_at(0.5) == 0.5
        assert m.pr == 0.75
        # normalised errors 0, 0.177, 0.303, 2.12 pass 21, 13, 8 and 0 of the 21 thresholds
        assert m.npr_auc == (21 + 13 + 8 + 0) / 84

    def test_perfect_track(self):
        m = compute_metrics(GT, GT)
        assert m.pr == 1.0 and m.sr_auc == 1.0 and m.npr_auc == 1.0

    def test_far_track(self):
        p = GT.copy()
        p[:, 1] += 30
        assert compute_metrics(p, GT).pr == 0.0

    def test_thresholds(self):
        assert len(SR_THRESHOLDS) == 21 and SR_THRESHOLDS[-1] == 1.0
        assert NPR_THRESHOLDS[-1] == 0.5

    def test_iou_and_error(self):
        a = np.array([[0, 0, 2, 2]])
        b = np.array([[1, 1, 2, 2]])
        assert iou_xywh(a, b)[0] == pytest.approx(1 / 7)
        assert center_error(a, b)[0] == pytest.approx(math.sqrt(2))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            compute_metrics(GT[:3], GT)
        with pytest.raises(ShapeError):
            compute_metrics(np.zeros((2, 3)), np.zeros((2, 3)))


class TestFlops:
    def test_primitives(self):
        assert conv_flops(3, 2, 4, 5, 5) == 2 * 9 * 2 * 4 * 25
        assert linear_flops(3, 4, 10) == 240
        assert attention_flops(10, 8) == 1600
        assert fft1_flops(8) == 5 * 8 * 3
        assert fft1_flops(224) == 8 * 224 * 224
        assert fft1_flops(1) == 0
        assert fft2_flops(4, 8, 2) == 2 * (4 * 120 + 8 * 40)

    def test_tokens(self):
        cfg = PipelineConfig()
        assert backbone_tokens(cfg.replace(fusion="concat"), None) == 490
        assert backbone_tokens(cfg, 111) == 160
        assert backbone_tokens(cfg.replace(sparsify="none"), 111) == 245

    def test_zero_depth(self):
        assert backbone_flops(PipelineConfig(backbone_depth=0), 245) == 0

    def test_depth_linearity(self):
        a = backbone_flops(PipelineConfig(backbone_depth=2), 160)
        b = backbone_flops(PipelineConfig(backbone_depth=4), 160)
        assert b == 2 * a

    def test_report(self):
        cfg = PipelineConfig()
        r = flops_report(cfg, [111, 196])
        assert r.tokens == [160, 245] and r.baseline_tokens == 490
        assert r.frames == 2
        assert r.stages["backbone"] == backbone_flops(cfg, 160) + backbone_flops(cfg, 245)
        assert r.baseline_total == 2 * flops_report(cfg, [111]).baseline_total
        assert r.total == sum(r.stages.values())

    def test_fewer_tokens_cost_less(self):
        cfg = PipelineConfig()
        assert flops_report(cfg, [98]).total < flops_report(cfg, [196]).total
