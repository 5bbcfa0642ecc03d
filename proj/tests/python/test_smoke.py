"""Smoke tests for the python bindings: frozen hand values per operation."""

import math

import numpy as np
import pytest

import dadet


def test_apply_fog_hand_value():
    pixels = np.full((3, 1, 1), 0.5, dtype=np.float32)
    beta = np.array([[math.log(2.0)]], dtype=np.float32)
    depth = np.array([[1.0]], dtype=np.float32)
    fogged = dadet.apply_fog(pixels, beta, 1.0, depth)
    assert fogged.shape == (3, 1, 1)
    assert abs(fogged[0, 0, 0] - 0.75) < 1e-6


def test_apply_fog_zero_beta_is_identity():
    rng = np.random.default_rng(0)
    pixels = rng.random((3, 4, 4), dtype=np.float32)
    beta = np.zeros((4, 4), dtype=np.float32)
    depth = np.ones((4, 4), dtype=np.float32)
    out = dadet.apply_fog(pixels, beta, 0.9, depth)
    np.testing.assert_allclose(out, pixels, atol=1e-7)


def test_prediction_discrepancy_hand_value():
    p_t = np.array([[0.9, 0.1]], dtype=np.float32)
    p_s = np.array([[0.5, 0.5]], dtype=np.float32)
    d = dadet.prediction_discrepancy(p_t, p_s)
    np.testing.assert_allclose(d, [[0.16, 0.16]], atol=1e-7)


def test_instance_weights_normalization():
    p_div = np.array([[0.0, 0.0], [0.1, 0.1], [0.2, 0.2]], dtype=np.float32)
    raw, normalized, degenerate = dadet.instance_weights(p_div)
    np.testing.assert_allclose(raw, [0.0, 0.1, 0.2], atol=1e-7)
    np.testing.assert_allclose(normalized, [0.0, 0.5, 1.0], atol=1e-6)
    assert not degenerate


def test_instance_weights_degenerate_fallback():
    p_div = np.full((4, 3), 0.2, dtype=np.float32)
    _, normalized, degenerate = dadet.instance_weights(p_div)
    assert degenerate
    assert all(w == 1.0 for w in normalized)


def test_foreground_mask_shape_and_union():
    boxes = np.array([[0.0, 0.0, 128.0, 128.0]], dtype=np.float32)
    mask = dadet.foreground_mask(boxes, 128, 128, 4)
    assert mask.shape == (32, 32)
    assert mask.dtype == np.uint8
    assert int(mask.sum()) == 32 * 32
    empty = dadet.foreground_mask(np.zeros((0, 4), dtype=np.float32), 128, 128, 4)
    assert int(empty.sum()) == 0


def test_split_features_is_complementary():
    rng = np.random.default_rng(1)
    fmap = rng.standard_normal((2, 8, 8)).astype(np.float32)
    boxes = np.array([[4.0, 4.0, 20.0, 20.0]], dtype=np.float32)
    fg, bg = dadet.split_features(fmap, boxes, 4)
    np.testing.assert_allclose(fg + bg, fmap, atol=0)
    assert np.all((fg == 0) | (bg == 0))
    assert fg.any() and bg.any()


def test_combine_hand_value_and_range_check():
    assert abs(dadet.combine(1.0, 0.5, 0.8) - 0.9) < 1e-7
    assert dadet.combine(1.0, 0.5, 1.0) == pytest.approx(1.0)
    assert dadet.combine(1.0, 0.5, 0.0) == pytest.approx(0.5)
    with pytest.raises(Exception):
        dadet.combine(1.0, 0.5, 1.5)


def test_iou_matrix():
    a = np.array([[0.0, 0.0, 1.0, 1.0]], dtype=np.float32)
    b = np.array([[0.0, 0.0, 1.0, 1.0], [0.5, 0.0, 1.5, 1.0], [5.0, 5.0, 6.0, 6.0]],
                 dtype=np.float32)
    m = dadet.iou(a, b)
    assert m.shape == (1, 3)
    np.testing.assert_allclose(m[0], [1.0, 1.0 / 3.0, 0.0], atol=1e-6)


def test_ema_update_hand_value():
    teacher = np.array([2.0], dtype=np.float32)
    student = np.array([1.0], dtype=np.float32)
    out = dadet.ema_update(teacher, student, 0.9996)
    assert abs(out[0] - 1.9996) < 1e-6
    frozen = dadet.ema_update(teacher, student, 1.0)
    assert frozen[0] == 2.0


def test_ap50_perfect_and_miss():
    gt = np.array([[0, 0, 10, 10, 0]], dtype=np.float32)
    hit = np.array([[0, 0, 10, 10, 0, 0.9]], dtype=np.float32)
    rep = dadet.ap50([(hit, gt)], num_classes=2)
    assert rep["map50"] == pytest.approx(1.0)
    assert rep["total_gt"] == 1
    miss = np.array([[50, 50, 60, 60, 0, 0.9]], dtype=np.float32)
    rep2 = dadet.ap50([(miss, gt)], num_classes=2)
    assert rep2["map50"] == pytest.approx(0.0)


def test_ap50_interleaved_false_positive():
    gt = np.array(
        [[0, 0, 10, 10, 0], [40, 0, 50, 10, 0], [80, 0, 90, 10, 0]], dtype=np.float32)
    dets = np.array(
        [
            [0, 0, 10, 10, 0, 0.9],
            [200, 200, 210, 210, 0, 0.8],
            [40, 0, 50, 10, 0, 0.7],
            [80, 0, 90, 10, 0, 0.6],
        ],
        dtype=np.float32,
    )
    rep = dadet.ap50([(dets, gt)], num_classes=1)
    assert rep["per_class_ap"][0] == pytest.approx(2.5 / 3.0, abs=1e-9)


def test_pca_projection_line():
    x = np.outer(np.arange(6, dtype=np.float64), [1.0, 2.0, -1.0])
    projected, components, ratios, rank = dadet.pca_projection(x, 2)
    assert projected.shape == (6, 2)
    assert components.shape == (2, 3)
    assert rank == 1
    assert ratios[0] == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(projected[:, 1], 0.0, atol=1e-12)
