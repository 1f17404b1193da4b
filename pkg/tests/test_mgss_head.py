import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from apmtrack.errors import ParameterError, ShapeError
from apmtrack.head import (
    BBox,
    HeadBranch,
    HeadWeights,
    extract_bbox,
    focal_loss,
    frame_losses,
    gaussian_heatmap,
    giou,
    giou_loss,
    head_forward,
    l1_loss,
    total_loss,
)
from apmtrack.mgss import (
    MgssWeights,
    SparsePlan,
    adaptive_k,
    fuse_and_scatter,
    k_from_variance,
    random_drop,
    score_estimate,
    score_variance,
    topk_indices,
    topk_select,
)
from apmtrack.motion import ConvBN


def sort_oracle(scores, k):
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(ranked[:k])


class TestAdaptiveK:
    def test_defaults(self):
        assert k_from_variance(0.0, 98, 196) == 196
        assert k_from_variance(1.0, 98, 196) == 111
        assert k_from_variance(0.5, 98, 196) == 134

    @pytest.mark.parametrize("decay", ["exp", "linear", "power"])
    def test_monotone_and_bounded(self, decay):
        ks = [k_from_variance(i / 100, 98, 196, 2, decay) for i in range(101)]
        assert ks[0] == 196
        assert all(a >= b for a, b in zip(ks, ks[1:]))
        assert all(98 <= k <= 196 for k in ks)

    def test_linear_clamps(self):
        assert k_from_variance(1.0, 98, 196, 2, "linear") == 98
        assert k_from_variance(0.25, 98, 196, 2, "linear") == 147

    def test_power(self):
        # 98 + 98 / 4 = 122.5 rounds half up
        assert k_from_variance(1.0, 98, 196, 2, "power") == 123

    def test_variance(self):
        var, x = score_variance(np.array([0.0, 1.0, 0.0, 1.0]))
        assert var == 0.25 and x == 1.0
        assert score_variance(np.full(7, 0.3)) == (0.0, 0.0)
        assert adaptive_k(np.full(196, 0.3), 98, 196)[0] == 196
        assert adaptive_k(np.tile([0.0, 1.0], 98), 98, 196)[0] == 111

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            k_from_variance(0.5, 100, 90)
        with pytest.raises(ParameterError):
            k_from_variance(0.5, 1, 9, beta=0)
        with pytest.raises(ParameterError):
            k_from_variance(0.5, 1, 9, decay="cubic")


class TestTopK:
    def test_ties_prefer_lower_index(self):
        assert topk_indices(np.array([0.5, 0.9, 0.5, 0.5]), 2).tolist() == [0, 1]

    def test_against_sort_oracle(self, rng):
        for _ in range(200):
            s = rng.integers(0, 5, size=20) / 4.0
            k = int(rng.integers(1, 21))
            assert topk_indices(s, k).tolist() == sort_oracle(s.tolist(), k)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.integers(1, 40), elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0])), st.data())
    def test_property(self, s, data):
        k = data.draw(st.integers(1, len(s)))
        idx = topk_indices(s, k)
        assert idx.tolist() == sort_oracle(s.tolist(), k)
        assert np.all(np.diff(idx) > 0)

    def test_select_and_scatter(self, rng):
        tokens = rng.normal(size=(12, 3))
        scores = rng.uniform(size=12)
        sel, plan = topk_select(tokens, scores, 5)
        np.testing.assert_array_equal(sel, tokens[plan.indices])
        evt = rng.normal(size=(12, 3))
        out = fuse_and_scatter(sel, evt, scores, plan)
        assert int(np.sum(~out.any(axis=1))) == 7
        i = plan.indices[0]
        np.testing.assert_allclose(out[i], tokens[i] + scores[i] * evt[i], atol=1e-15)

    def test_scatter_validation(self, rng):
        plan = SparsePlan(2, np.array([1, 1]), 0.0, 0.0)
        with pytest.raises(ShapeError):
            fuse_and_scatter(np.zeros((2, 3)), np.zeros((4, 3)), np.zeros(4), plan)
        with pytest.raises(ShapeError):
            fuse_and_scatter(np.zeros((3, 3)), np.zeros((4, 3)), np.zeros(4), SparsePlan(2, np.array([0, 1]), 0, 0))
        with pytest.raises(ShapeError):
            topk_select(np.zeros((3, 2)), np.zeros(4), 2)

    def test_k_bounds(self):
        with pytest.raises(ParameterError):
            topk_indices(np.zeros(4), 0)
        with pytest.raises(ParameterError):
            topk_indices(np.zeros(4), 5)

    def test_random_drop(self):
        a = random_drop(196, 111, np.random.default_rng(3))
        b = random_drop(196, 111, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)
        assert len(np.unique(a)) == 111 and np.all(np.diff(a) > 0)

    def test_scores_in_unit_interval(self, rng):
        w = MgssWeights(rng.normal(size=(8, 4)), rng.normal(size=4), rng.normal(size=(4, 1)), rng.normal(size=1))
        dx = rng.normal(size=(30, 8)) * 10
        s = score_estimate(dx, w)
        assert s.shape == (30,) and np.all((s >= 0) & (s <= 1))
        ref = [1 / (1 + math.exp(-(np.maximum(row @ w.w1 + w.b1, 0) @ w.w2[:, 0] + w.b2[0]))) for row in dx]
        assert np.abs(s - ref).max() < 1e-12


class TestGiou:
    def test_hand_cases(self):
        a = BBox.from_xywh(0, 0, 1, 1)
        assert giou_loss(a, a) == 0.0
        assert abs(giou_loss(a, BBox.from_xywh(1, 1, 1, 1)) - 1.5) < 1e-12
        assert abs(giou_loss(BBox.from_xywh(0, 0, 2, 1), BBox.from_xywh(1, 0, 2, 1)) - 2 / 3) < 1e-12

    def test_against_reference(self, rng):
        for _ in range(100):
            a = BBox(*rng.uniform(0, 1, 2), *rng.uniform(0.05, 0.6, 2))
            b = BBox(*rng.uniform(0, 1, 2), *rng.uniform(0.05, 0.6, 2))
            assert abs(giou(a, b) - oracles.giou_ref(a.xyxy(), b.xyxy())) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(
        st.tuples(*[st.floats(-5, 5)] * 2, *[st.floats(0.01, 5)] * 2),
        st.tuples(*[st.floats(-5, 5)] * 2, *[st.floats(0.01, 5)] * 2),
        st.floats(-3, 3),
        st.floats(-3, 3),
    )
    def test_symmetry_translation_range(self, ta, tb, dx, dy):
        a, b = BBox(*ta), BBox(*tb)
        loss = giou_loss(a, b)
        assert 0 <= loss < 2
        assert abs(loss - giou_loss(b, a)) < 1e-12
        shifted = giou_loss(BBox(a.cx + dx, a.cy + dy, a.w, a.h), BBox(b.cx + dx, b.cy + dy, b.w, b.h))
        assert abs(shifted - loss) < 1e-9

    def test_degenerate_box(self):
        with pytest.raises(ParameterError):
            BBox(0.5, 0.5, 0.0, 0.1)


class TestLosses:
    def test_focal_perfect_prediction(self):
        t = gaussian_heatmap((5, 5), (2, 3))
        assert t[2, 3] == 1.0 and np.sum(t == 1.0) == 1
        p = np.where(t == 1.0, 1.0, 0.0)
        assert focal_loss(p, t) == 0.0

    def test_focal_hand_case(self):
        t = np.array([[1.0, 0.5]])
        p = np.array([[0.8, 0.4]])
        pos = -(0.2**2) * math.log(0.8)
        neg = -(0.5**4) * 0.4**2 * math.log(0.6)
        assert abs(focal_loss(p, t) - (pos + neg)) < 1e-15

    def test_focal_clamps_logs(self):
        t = np.array([[1.0, 0.0]])
        assert math.isfinite(focal_loss(np.array([[0.0, 1.0]]), t))

    def test_focal_needs_positive(self):
        with pytest.raises(ParameterError):
            focal_loss(np.zeros((2, 2)), np.zeros((2, 2)))

    def test_l1(self):
        assert l1_loss([1, 2, 3, 4], [1, 1, 1, 1]) == 1.5

    def test_total(self, rng):
        for f, l, g in rng.uniform(0, 3, size=(50, 3)):
            assert abs(total_loss(f, l, g) - (f + 5 * l + 2 * g)) < 1e-12
        assert total_loss(1, 1, 1, (0.5, 0, 1)) == 1.5


def branch(rng, cin, cout, hidden=4):
    def cb(a, b):
        return ConvBN(rng.normal(size=(3, 3, a, b)) * 0.3, np.zeros(b), np.ones(b), np.zeros(b), np.zeros(b), np.ones(b) - 1e-5)

    return HeadBranch(cb(cin, hidden), cb(hidden, cout))


class TestHead:
    def test_extract_bbox(self):
        cls = np.zeros((4, 4))
        cls[1, 2] = 0.9
        offset = np.zeros((4, 4, 2))
        offset[1, 2] = (0.25, -0.5)
        size = np.full((4, 4, 2), 0.3)
        b = extract_bbox(cls, offset, size)
        assert (b.cx, b.cy, b.w, b.h) == (0.6875, 0.25, 0.3, 0.3)

    def test_first_peak_wins(self):
        cls = np.ones((3, 3))
        b = extract_bbox(cls, np.zeros((3, 3, 2)), np.full((3, 3, 2), 0.5))
        assert (b.cx, b.cy) == (0.5 / 3, 0.5 / 3)

    def test_forward_ranges(self, rng):
        w = HeadWeights(branch(rng, 6, 1), branch(rng, 6, 2), branch(rng, 6, 2))
        out = head_forward(rng.normal(size=(14, 14, 6)) * 5, w)
        assert out.cls.shape == (14, 14)
        assert np.all((out.cls > 0) & (out.cls < 1))
        assert np.all(np.abs(out.offset) <= 0.5)
        assert np.all((out.size > 0) & (out.size < 1))

    def test_frame_losses_consistent(self, rng):
        w = HeadWeights(branch(rng, 6, 1), branch(rng, 6, 2), branch(rng, 6, 2))
        out = head_forward(rng.normal(size=(14, 14, 6)), w)
        gt = BBox(0.5, 0.5, 0.2, 0.2)
        lb = frame_losses(out, gt)
        assert lb.total == pytest.approx(lb.focal + 5 * lb.l1 + 2 * lb.giou, abs=1e-12)
        assert lb.giou == pytest.approx(giou_loss(out.bbox, gt))

    def test_shape_check(self, rng):
        w = HeadWeights(branch(rng, 6, 1), branch(rng, 6, 2), branch(rng, 6, 2))
        with pytest.raises(ShapeError):
            head_forward(np.zeros((14, 6)), w)
