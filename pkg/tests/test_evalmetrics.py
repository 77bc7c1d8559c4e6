import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moveseg.evalmetrics import compare_sources, format_score_report, iou, precision_recall, score
from moveseg.imgcore import DimensionError


def block(shape, y, x, h, w):
    m = np.zeros(shape, bool)
    m[y:y + h, x:x + w] = True
    return m


def test_iou_examples():
    m = block((6, 6), 1, 1, 3, 3)
    assert iou(m, m) == 1.0
    assert iou(m, block((6, 6), 4, 4, 2, 2)) == 0.0
    full = np.ones((4, 6), bool)
    assert iou(block((4, 6), 0, 0, 4, 3), full) == 0.5


def test_empty_conventions():
    e = np.zeros((3, 3), bool)
    assert iou(e, e) == 1.0
    assert precision_recall(e, e) == (1.0, 1.0)
    m = block((3, 3), 0, 0, 1, 1)
    assert precision_recall(e, m) == (1.0, 0.0)
    assert precision_recall(m, e) == (0.0, 1.0)
    assert iou(e, m) == 0.0


def test_precision_recall_subsets():
    gt = block((8, 8), 1, 1, 4, 4)
    inner = block((8, 8), 2, 2, 2, 2)
    p, r = precision_recall(inner, gt)
    assert p == 1.0 and r < 1.0
    p, r = precision_recall(gt, inner)
    assert r == 1.0 and p < 1.0


def test_overlapping_blocks_by_hand():
    a = block((4, 4), 0, 0, 2, 2)
    b = block((4, 4), 0, 1, 2, 2)
    assert precision_recall(a, b) == (0.5, 0.5)
    assert iou(a, b) == pytest.approx(2 / 6)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        iou(np.zeros((3, 3), bool), np.zeros((3, 4), bool))
    with pytest.raises(DimensionError):
        precision_recall(np.zeros((3, 3), bool), np.zeros((4, 3), bool))


def random_pair(seed, shape=(12, 12)):
    rng = np.random.default_rng(seed)
    return rng.random(shape) < rng.random(), rng.random(shape) < rng.random()


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1))
def test_metric_identities(seed):
    a, b = random_pair(seed)
    assert iou(a, b) == iou(b, a)
    pa, ra = precision_recall(a, b)
    pb, rb = precision_recall(b, a)
    assert pa == rb and ra == pb
    j = iou(a, b)
    assert 0 <= j <= min(pa, ra) <= 1
    # the bound is tight exactly when one mask contains the other or they are disjoint
    nested = np.all(a <= b) or np.all(b <= a)
    assert (j == min(pa, ra)) == (nested or not (a & b).any())


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.integers(0, 6), st.integers(0, 6))
def test_translation_invariance(seed, dy, dx):
    a, b = random_pair(seed, (8, 8))
    pad = lambda m: np.pad(m, ((dy, 6 - dy), (dx, 6 - dx)))
    assert iou(pad(a), pad(b)) == iou(a, b)
    assert precision_recall(pad(a), pad(b)) == precision_recall(a, b)


def test_compare_gt_vs_complement():
    gts = [block((6, 6), 1, 1, 3, 3), block((6, 6), 0, 2, 4, 2)]
    a, b = compare_sources(gts, [~g for g in gts], gts)
    assert (a.mean_iou, a.precision, a.recall) == (1.0, 1.0, 1.0)
    assert b.mean_iou == 0.0


def test_compare_equal_sources():
    gts = [block((5, 5), 0, 0, 2, 2)]
    preds = [block((5, 5), 1, 1, 2, 2)]
    a, b = compare_sources(preds, preds, gts)
    assert a == b


def test_hand_computed_means():
    shape = (4, 4)
    gts = [block(shape, 0, 0, 2, 2), block(shape, 0, 0, 4, 4), block(shape, 0, 0, 1, 4)]
    preds = [block(shape, 0, 0, 2, 2),        # iou 1,   p 1,   r 1
             block(shape, 0, 0, 2, 4),        # iou 1/2, p 1,   r 1/2
             block(shape, 0, 0, 2, 4)]        # iou 1/2, p 1/2, r 1
    s = score(preds, gts)
    assert s.mean_iou == pytest.approx(2 / 3)
    assert s.precision == pytest.approx(5 / 6)
    assert s.recall == pytest.approx(5 / 6)


def test_length_mismatch():
    m = [np.zeros((2, 2), bool)]
    with pytest.raises(ValueError):
        compare_sources(m, m + m, m)


def test_report_format():
    gts = [block((4, 4), 0, 0, 2, 2), block((4, 4), 0, 0, 4, 4)]
    preds = [block((4, 4), 0, 0, 2, 2), block((4, 4), 0, 0, 2, 4)]
    text = format_score_report(["a", "b"], {"net": score(preds, gts)})
    assert text.splitlines() == ["item\tnet_iou\tnet_precision\tnet_recall",
                                 "a\t1.0000\t1.0000\t1.0000",
                                 "b\t0.5000\t1.0000\t0.5000",
                                 "mean\t0.7500\t1.0000\t0.7500"]
