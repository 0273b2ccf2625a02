from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wiou_lab import gradtape as gt
from wiou_lab.audit import random_pairs
from wiou_lab.geometry import BBox, TapeBox, enclosure, iou_loss


def interval_oracle(a, t):
    """Exact rational overlap/union/enclosure from box edges."""
    a = [F(v) for v in a]
    t = [F(v) for v in t]

    def edges(c, s):
        return c - s / 2, c + s / 2

    ax, tx = edges(a[0], a[2]), edges(t[0], t[2])
    ay, ty = edges(a[1], a[3]), edges(t[1], t[3])
    wi = max(F(0), min(ax[1], tx[1]) - max(ax[0], tx[0]))
    hi = max(F(0), min(ay[1], ty[1]) - max(ay[0], ty[0]))
    su = a[2] * a[3] + t[2] * t[3] - wi * hi
    wg = max(ax[1], tx[1]) - min(ax[0], tx[0])
    hg = max(ay[1], ty[1]) - min(ay[0], ty[0])
    return wi, hi, su, wg, hg


def _values(g):
    return g.W_i.value, g.H_i.value, g.S_u.value, g.W_g.value, g.H_g.value


@pytest.mark.parametrize(
    "a, t",
    [
        ((0.5, 0.5, 0.2, 0.2), (0.5, 0.5, 0.2, 0.2)),
        ((0.5, 0.5, 0.4, 0.2), (0.5, 0.5, 0.2, 0.4)),
        ((0.3, 0.3, 0.2, 0.2), (0.5, 0.5, 0.2, 0.2)),
    ],
)
def test_enclosure_examples(a, t):
    got = _values(enclosure(BBox(*a), BBox(*t)))
    want = interval_oracle(a, t)
    assert got == pytest.approx([float(v) for v in want], abs=1e-15)


def test_enclosure_example_values():
    g = enclosure(BBox(0.5, 0.5, 0.2, 0.2), BBox(0.5, 0.5, 0.2, 0.2))
    assert _values(g) == pytest.approx((0.2, 0.2, 0.04, 0.2, 0.2), abs=1e-15)
    g = enclosure(BBox(0.5, 0.5, 0.4, 0.2), BBox(0.5, 0.5, 0.2, 0.4))
    assert _values(g)[:3] == pytest.approx((0.2, 0.2, 0.12), abs=1e-15)
    g = enclosure(BBox(0.3, 0.3, 0.2, 0.2), BBox(0.5, 0.5, 0.2, 0.2))
    assert g.W_i.value == 0.0
    assert (g.W_g.value, g.H_g.value) == pytest.approx((0.4, 0.4), abs=1e-15)


def test_enclosure_matches_oracle_on_random_pairs():
    for a, t in random_pairs(300, seed=11):
        got = _values(enclosure(a, t))
        want = interval_oracle(a.as_tuple(), t.as_tuple())
        assert got == pytest.approx([float(v) for v in want], abs=1e-14)


def test_iou_loss_examples():
    assert iou_loss(BBox(0.5, 0.5, 0.2, 0.2), BBox(0.5, 0.5, 0.2, 0.2)).value == pytest.approx(0, abs=1e-14)
    assert iou_loss(BBox(0.1, 0.1, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1)).value == 1.0
    val = iou_loss(BBox(0.5, 0.5, 0.4, 0.2), BBox(0.5, 0.5, 0.2, 0.4)).value
    assert val == pytest.approx(1 - 0.04 / 0.12, abs=1e-15)
    assert val == pytest.approx(2 / 3, abs=1e-15)


@pytest.mark.parametrize("bad", [(0.5, 0.5, 0.0, 0.1), (0.5, 0.5, 0.1, -1.0), (np.nan, 0, 1, 1)])
def test_bbox_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        BBox(*bad)


def test_touching_boxes_count_as_disjoint():
    a, t = BBox(0.25, 0.5, 0.5, 0.5), BBox(0.75, 0.5, 0.5, 0.5)
    anchor = TapeBox.from_box(a)
    loss = iou_loss(anchor, t)
    assert loss.value == 1.0
    assert gt.backward(loss, anchor, strict=False) == [0.0] * 4


boxes = st.tuples(
    st.floats(0.05, 0.95),
    st.floats(0.05, 0.95),
    st.floats(0.01, 0.5),
    st.floats(0.01, 0.5),
).map(lambda v: BBox(*v))


@settings(max_examples=300, deadline=None)
@given(boxes, boxes, st.floats(1e-3, 1e3))
def test_scale_invariance(a, t, k):
    base = iou_loss(a, t).value
    assert iou_loss(a.scaled(k), t.scaled(k)).value == pytest.approx(base, rel=1e-9, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_symmetry(a, t):
    assert iou_loss(a, t).value == pytest.approx(iou_loss(t, a).value, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_enclosure_invariants(a, t):
    g = enclosure(a, t)
    wi, hi, su, wg, hg = _values(g)
    assert su == pytest.approx(a.w * a.h + t.w * t.h - wi * hi, abs=1e-15)
    assert su > 0
    assert wg >= max(a.w, t.w) - 1e-15 and hg >= max(a.h, t.h) - 1e-15
    assert 0 <= wi <= min(a.w, t.w) + 1e-15 and 0 <= hi <= min(a.h, t.h) + 1e-15
    # identical boxes can round a few ulp below zero
    assert -1e-12 <= iou_loss(a, t).value <= 1


def test_closed_form_gradient_wrt_overlap_width():
    for a, t in random_pairs(100, seed=3, overlapping_only=True):
        anchor = TapeBox.from_box(a)
        g = enclosure(anchor, t)
        loss = iou_loss(anchor, t, geom=g)
        gt.backward(loss)
        iou = 1.0 - loss.value
        expected = -g.H_i.value * (iou + 1.0) / g.S_u.value
        assert abs(g.W_i.adjoint - expected) <= 1e-8


def test_gradient_vanishes_for_disjoint_boxes():
    for a, t in random_pairs(100, seed=4, disjoint_only=True):
        anchor = TapeBox.from_box(a)
        loss = iou_loss(anchor, t)
        assert loss.value == 1.0
        assert gt.backward(loss, anchor, strict=False) == [0.0, 0.0, 0.0, 0.0]
