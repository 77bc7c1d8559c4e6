import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from moveseg.imgcore import DimensionError
from moveseg.superpixel import (SuperpixelLabeling, enforce_connectivity, load_labeling,
                                region_means, rgb_to_lab, save_labeling, slic)


def smooth_noise(seed, shape=(48, 64)):
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random(shape + (3,)) * 255, (2, 2, 0))
    img = (img - img.min()) / (img.max() - img.min()) * 255
    return img.astype(np.uint8)


def assert_valid_labeling(lab: SuperpixelLabeling, shape):
    assert lab.labels.shape == shape
    ids = np.unique(lab.labels)
    assert np.array_equal(ids, np.arange(lab.region_count))
    assert lab.sizes.sum() == shape[0] * shape[1]
    four = ndimage.generate_binary_structure(2, 1)
    for r in range(lab.region_count):
        _, n = ndimage.label(lab.labels == r, structure=four)
        assert n == 1, f"region {r} has {n} components"


def test_uniform_image_grid_pattern():
    lab = slic(np.full((64, 64, 3), 120, np.uint8), target_regions=16)
    assert lab.region_count == 16
    assert np.all(np.abs(lab.sizes - 256) <= 0.25 * 256)
    assert_valid_labeling(lab, (64, 64))


def test_two_halves_never_straddled():
    img = np.zeros((64, 64, 3), np.uint8)
    img[:, :32] = (200, 30, 30)
    img[:, 32:] = (20, 180, 60)
    lab = slic(img, target_regions=8, compactness=1.0)
    left, right = set(lab.labels[:, :32].ravel()), set(lab.labels[:, 32:].ravel())
    assert not left & right


def test_single_region():
    lab = slic(smooth_noise(0), target_regions=1)
    assert lab.region_count == 1 and lab.sizes[0] == 48 * 64


@pytest.mark.parametrize("target", [0, 48 * 64 + 1])
def test_target_out_of_range(target):
    with pytest.raises(ValueError):
        slic(smooth_noise(0), target_regions=target)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 120), st.sampled_from([1.0, 10.0, 40.0]))
def test_labeling_invariants_and_count_bounds(seed, target, compactness):
    img = smooth_noise(seed)
    lab = slic(img, target_regions=target, compactness=compactness, iterations=5)
    assert_valid_labeling(lab, img.shape[:2])
    assert 0.5 * target <= lab.region_count <= 2 * target


def test_deterministic():
    img = smooth_noise(3)
    a, b = slic(img, 40), slic(img, 40)
    assert np.array_equal(a.labels, b.labels)


def _region_sets(labels):
    return {frozenset(np.flatnonzero(labels.ravel() == r)) for r in np.unique(labels)}


def test_channel_permutation_equivariance_with_symmetric_distance():
    img = smooth_noise(4)
    a = slic(img, 30, color_space="rgb")
    b = slic(img[..., [2, 0, 1]], 30, color_space="rgb")
    assert _region_sets(a.labels) == _region_sets(b.labels)


def test_lab_reference_values():
    lab = rgb_to_lab(np.array([[[255, 255, 255], [0, 0, 0], [255, 0, 0]]], np.uint8))
    assert lab[0, 0] == pytest.approx([100.0, 0.0, 0.0], abs=0.01)
    assert lab[0, 1] == pytest.approx([0.0, 0.0, 0.0], abs=0.01)
    # CIE reference for sRGB red under D65
    assert lab[0, 2] == pytest.approx([53.24, 80.09, 67.20], abs=0.05)


def test_enforce_connectivity_splits_and_merges():
    labels = np.zeros((6, 8), int)
    labels[:, 4:] = 1
    labels[0, 0] = 1          # 1-pixel orphan of region 1 inside region 0
    labels[3:, 6:] = 2
    labels[:, 7] = 2          # region 2: one piece only
    out = enforce_connectivity(labels, min_size=2)
    assert out[0, 0] == out[1, 0]  # orphan merged into its surroundings
    lab = SuperpixelLabeling.from_labels(out)
    assert_valid_labeling(lab, labels.shape)


def test_enforce_connectivity_keeps_large_detached_piece():
    labels = np.zeros((4, 9), int)
    labels[:, 3:6] = 1        # region 0 split into two 12-pixel halves
    out = enforce_connectivity(labels, min_size=2)
    assert len(np.unique(out)) == 3


# ---- region means

def test_region_means_constant():
    lab = slic(smooth_noise(1), 20)
    assert np.allclose(region_means(lab, np.full(lab.shape, 0.7)), 0.7)


def test_region_means_single_region():
    vals = np.random.default_rng(0).random((5, 6))
    lab = SuperpixelLabeling.from_labels(np.zeros((5, 6), int))
    assert region_means(lab, vals)[0] == pytest.approx(vals.mean())


def test_region_means_hand_computed():
    labels = np.array([[0, 0, 1], [0, 1, 1]])
    vals = np.array([[1.0, 2.0, 10.0], [3.0, 20.0, 30.0]])
    means = region_means(SuperpixelLabeling.from_labels(labels), vals)
    assert means == pytest.approx([2.0, 20.0])


def test_region_means_mismatch():
    lab = SuperpixelLabeling.from_labels(np.zeros((3, 3), int))
    with pytest.raises(DimensionError):
        region_means(lab, np.zeros((3, 4)))


def test_from_labels_centroids():
    labels = np.array([[0, 0, 1], [0, 1, 1]])
    lab = SuperpixelLabeling.from_labels(labels)
    assert lab.centroids[0] == pytest.approx([1 / 3, 1 / 3])
    assert lab.sizes.tolist() == [3, 3]


def test_labeling_serialization(tmp_path):
    lab = slic(smooth_noise(2), 50)
    save_labeling(tmp_path / "l.sp", lab)
    raw = (tmp_path / "l.sp").read_bytes()
    header, body = raw.split(b"\n", 1)
    assert header == f"64 48 {lab.region_count}".encode()
    assert len(body) == 64 * 48 * 2
    # big-endian: high byte first
    assert int.from_bytes(body[:2], "big") == lab.labels[0, 0]
    back = load_labeling(tmp_path / "l.sp")
    assert np.array_equal(back.labels, lab.labels)
    assert back.region_count == lab.region_count
