"""Photometric, minimum-reprojection and smoothness losses.

Derived expectations come from closed-form evaluation on constant images
and from brute-force double-loop summation, never from the implementation
under test.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from panodepth.depth_loss import (
    PhotometricConfig,
    ReprojectionSet,
    depth_loss,
    masked_photometric_loss,
    min_reprojection,
    photometric_error,
    sigmoid_to_depth,
    smoothness_loss,
    ssim_map,
)

CFG = PhotometricConfig()


def constant_pair_error(a: float, b: float, cfg: PhotometricConfig = CFG) -> float:
    """Closed-form photometric error between two constant images.

    SSIM of constants: variances and covariance vanish, so
    ssim = (2ab + c1) c2 / ((a^2 + b^2 + c1) c2).
    """
    ssim = (2 * a * b + cfg.c1) / (a * a + b * b + cfg.c1)
    return cfg.alpha * (1 - ssim) / 2 + (1 - cfg.alpha) * abs(a - b)


class TestSSIM:
    def test_self_similarity_everywhere(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(10, 12))
        out = ssim_map(img, img, CFG)
        np.testing.assert_array_equal(out, np.ones_like(out))

    def test_constants_closed_form(self):
        a = np.zeros((6, 6))
        b = np.ones((6, 6))
        expected = CFG.c1 / (1.0 + CFG.c1)  # = 9.999e-5
        np.testing.assert_allclose(ssim_map(a, b, CFG), expected, rtol=1e-12)
        assert abs(expected - 9.999e-5) < 1e-8

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            a = rng.uniform(size=(7, 9))
            b = rng.uniform(size=(7, 9))
            np.testing.assert_allclose(ssim_map(a, b, CFG), ssim_map(b, a, CFG), atol=1e-12)

    def test_range(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=(16, 16))
        b = rng.uniform(size=(16, 16))
        s = ssim_map(a, b, CFG)
        assert np.all(s >= -1.0 - 1e-12) and np.all(s <= 1.0 + 1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            ssim_map(np.zeros((4, 4)), np.zeros((4, 5)), CFG)


class TestPhotometricError:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(size=(8, 8))
        np.testing.assert_allclose(photometric_error(img, img, CFG), 0.0, atol=1e-15)

    def test_constants_hand_value(self):
        a = np.zeros((6, 6))
        b = np.ones((6, 6))
        expected = constant_pair_error(0.0, 1.0)
        np.testing.assert_allclose(photometric_error(a, b, CFG), expected, rtol=1e-12)
        assert abs(expected - 0.5750) < 1e-4

    def test_alpha_zero_reduces_to_l1(self):
        cfg = PhotometricConfig(alpha=0.0)
        rng = np.random.default_rng(4)
        a = rng.uniform(size=(8, 8))
        b = rng.uniform(size=(8, 8))
        np.testing.assert_allclose(photometric_error(a, b, cfg), np.abs(a - b))

    def test_nonnegative(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(size=(12, 12))
        b = rng.uniform(size=(12, 12))
        assert np.all(photometric_error(a, b, CFG) >= 0)

    def test_channel_average(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(size=(8, 8, 3))
        b = rng.uniform(size=(8, 8, 3))
        per_channel = np.stack(
            [photometric_error(a[..., c], b[..., c], CFG) for c in range(3)], axis=-1
        )
        np.testing.assert_allclose(photometric_error(a, b, CFG), per_channel.mean(-1), atol=1e-14)


def _constant_set(levels: dict[str, float], shape=(8, 8), exclusion=None) -> ReprojectionSet:
    """Reprojection set made of constant frames with target = 0."""
    full = lambda v: np.full(shape, v)
    ones = np.ones(shape, dtype=bool)
    return ReprojectionSet(
        target=full(0.0),
        warped_prev=full(levels["warped_prev"]),
        warped_next=full(levels["warped_next"]),
        mask_prev=ones,
        mask_next=ones,
        prev=full(levels["prev"]),
        next=full(levels["next"]),
        exclusion=exclusion,
    )


class TestMinReprojection:
    def test_min_of_known_constant_errors(self):
        # Four constant candidates give four known error levels; the map
        # must equal the smallest one everywhere.
        levels = {"warped_prev": 0.3, "warped_next": 0.5, "prev": 0.8, "next": 0.9}
        rset = _constant_set(levels)
        errors = sorted(constant_pair_error(0.0, v) for v in levels.values())
        m, valid = min_reprojection(rset, CFG)
        assert valid.all()
        np.testing.assert_allclose(m, errors[0], rtol=1e-12)

    def test_static_scene_static_camera_gives_zero(self):
        rng = np.random.default_rng(7)
        img = rng.uniform(size=(8, 8))
        ones = np.ones((8, 8), dtype=bool)
        rset = ReprojectionSet(
            target=img,
            warped_prev=img + 0.2,
            warped_next=img + 0.1,
            mask_prev=ones,
            mask_next=ones,
            prev=img.copy(),
            next=img.copy(),
        )
        m, _ = min_reprojection(rset, CFG)
        np.testing.assert_allclose(m, 0.0, atol=1e-15)

    def test_min_bounded_by_each_member(self):
        rng = np.random.default_rng(8)
        shape = (10, 10)
        frames = {k: rng.uniform(size=shape) for k in ("warped_prev", "warped_next", "prev", "next")}
        target = rng.uniform(size=shape)
        mask_prev = rng.uniform(size=shape) < 0.7
        mask_next = rng.uniform(size=shape) < 0.7
        rset = ReprojectionSet(
            target=target,
            warped_prev=frames["warped_prev"],
            warped_next=frames["warped_next"],
            mask_prev=mask_prev,
            mask_next=mask_next,
            prev=frames["prev"],
            next=frames["next"],
        )
        m, valid = min_reprojection(rset, CFG)
        for name, warp_mask in (
            ("warped_prev", mask_prev),
            ("warped_next", mask_next),
            ("prev", None),
            ("next", None),
        ):
            err = photometric_error(target, frames[name], CFG)
            sel = valid if warp_mask is None else (valid & warp_mask)
            assert np.all(m[sel] <= err[sel] + 1e-15)

    def test_mask_union_and_exclusion(self):
        shape = (6, 6)
        exclusion = np.zeros(shape, dtype=bool)
        exclusion[0] = True
        rset = _constant_set(
            {"warped_prev": 0.1, "warped_next": 0.2, "prev": 0.3, "next": 0.4},
            shape=shape,
            exclusion=exclusion,
        )
        rset.mask_prev = np.zeros(shape, dtype=bool)
        rset.mask_prev[:, :3] = True
        rset.mask_next = np.zeros(shape, dtype=bool)
        rset.mask_next[:, 2:] = True
        _, valid = min_reprojection(rset, CFG)
        np.testing.assert_array_equal(valid, (rset.mask_prev | rset.mask_next) & ~exclusion)

    def test_invalid_warp_excluded_from_min(self):
        shape = (6, 6)
        rset = _constant_set({"warped_prev": 0.1, "warped_next": 0.5, "prev": 0.7, "next": 0.9}, shape)
        rset.mask_prev = np.zeros(shape, dtype=bool)  # best candidate masked out
        m, valid = min_reprojection(rset, CFG)
        assert valid.all()
        np.testing.assert_allclose(m, constant_pair_error(0.0, 0.5), rtol=1e-12)


class TestMaskedPhotometricLoss:
    def test_identical_frames_zero(self):
        rng = np.random.default_rng(9)
        img = rng.uniform(size=(8, 8))
        ones = np.ones((8, 8), dtype=bool)
        rset = ReprojectionSet(img, img, img, ones, ones, img, img)
        assert masked_photometric_loss([rset], CFG) == pytest.approx(0.0, abs=1e-15)

    def test_mean_over_valid_pixels(self):
        # Uniform error, half the pixels excluded: the mean over the valid
        # half equals the uniform per-pixel value.
        shape = (8, 8)
        exclusion = np.zeros(shape, dtype=bool)
        exclusion[:4] = True
        rset = _constant_set(
            {"warped_prev": 0.4, "warped_next": 0.6, "prev": 0.7, "next": 0.8},
            shape=shape,
            exclusion=exclusion,
        )
        expected = constant_pair_error(0.0, 0.4)
        assert masked_photometric_loss([rset], CFG) == pytest.approx(expected, rel=1e-12)

    def test_sum_over_scales(self):
        rset = _constant_set({"warped_prev": 0.4, "warped_next": 0.6, "prev": 0.7, "next": 0.8})
        one = masked_photometric_loss([rset], CFG)
        three = masked_photometric_loss([rset, rset, rset], CFG)
        assert three == pytest.approx(3 * one, rel=1e-12)

    def test_zero_valid_pixels_raises(self):
        shape = (4, 4)
        rset = _constant_set(
            {"warped_prev": 0.4, "warped_next": 0.6, "prev": 0.7, "next": 0.8},
            shape=shape,
            exclusion=np.ones(shape, dtype=bool),
        )
        with pytest.raises(ValueError, match="degenerate"):
            masked_photometric_loss([rset], CFG)

    def test_empty_scale_list_raises(self):
        with pytest.raises(ValueError, match="scale"):
            masked_photometric_loss([], CFG)


def smoothness_brute_force(depths, image) -> float:
    """Independent double-loop evaluation of the smoothness term."""
    total = 0.0
    for i, d in enumerate(depths):
        inv = 1.0 / d
        dstar = inv / inv.mean()
        h, w = d.shape
        acc = 0.0
        for r in range(h):
            for c in range(w - 1):
                acc += abs(dstar[r, c + 1] - dstar[r, c]) * math.exp(
                    -abs(image[r, c + 1] - image[r, c])
                )
        for r in range(h - 1):
            for c in range(w):
                acc += abs(dstar[r + 1, c] - dstar[r, c]) * math.exp(
                    -abs(image[r + 1, c] - image[r, c])
                )
        total += acc / (h * w) * 0.5**i
    return total


class TestSmoothness:
    def test_constant_depth_zero(self):
        rng = np.random.default_rng(10)
        img = rng.uniform(size=(8, 8))
        assert smoothness_loss([np.full((8, 8), 3.0)], img) == 0.0

    def test_inverse_ramp_constant_image(self):
        # Constant image => unit weights; inverse-depth x-ramp of slope s
        # after normalization gives |s| * (W-1)/W.
        h, w = 6, 10
        inv = 1.0 + 0.1 * np.arange(w)[None, :] * np.ones((h, 1))
        d = 1.0 / inv
        img = np.full((h, w), 0.42)
        dstar = inv / inv.mean()
        slope = dstar[0, 1] - dstar[0, 0]
        expected = abs(slope) * (w - 1) / w
        assert smoothness_loss([d], img) == pytest.approx(expected, rel=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        depths = [rng.uniform(1.0, 10.0, size=(6, 7)) for _ in range(3)]
        img = rng.uniform(size=(6, 7))
        assert smoothness_loss(depths, img) == pytest.approx(
            smoothness_brute_force(depths, img), rel=1e-12
        )

    def test_invariant_to_global_depth_scale(self):
        rng = np.random.default_rng(12)
        d = rng.uniform(1.0, 5.0, size=(8, 8))
        img = rng.uniform(size=(8, 8))
        a = smoothness_loss([d], img)
        b = smoothness_loss([2.0 * d], img)
        assert a == pytest.approx(b, rel=1e-12)

    def test_rejects_nonpositive_depth(self):
        with pytest.raises(ValueError, match="positive"):
            smoothness_loss([np.zeros((4, 4))], np.zeros((4, 4)))


class TestDepthLoss:
    def test_zero_components(self):
        rng = np.random.default_rng(13)
        img = rng.uniform(size=(8, 8))
        ones = np.ones((8, 8), dtype=bool)
        rset = ReprojectionSet(img, img, img, ones, ones, img, img)
        assert depth_loss([rset], [np.full((8, 8), 2.0)], img, CFG) == pytest.approx(
            0.0, abs=1e-15
        )

    def test_combination_arithmetic(self):
        rng = np.random.default_rng(14)
        img = rng.uniform(size=(8, 8))
        ones = np.ones((8, 8), dtype=bool)
        rset = ReprojectionSet(
            img,
            rng.uniform(size=(8, 8)),
            rng.uniform(size=(8, 8)),
            ones,
            ones,
            rng.uniform(size=(8, 8)),
            rng.uniform(size=(8, 8)),
        )
        depths = [rng.uniform(1.0, 5.0, size=(8, 8))]
        total = depth_loss([rset], depths, img, CFG)
        expected = masked_photometric_loss([rset], CFG) + 0.001 * smoothness_loss(depths, img)
        assert total == expected

    def test_scale_count_mismatch(self):
        rng = np.random.default_rng(15)
        img = rng.uniform(size=(8, 8))
        ones = np.ones((8, 8), dtype=bool)
        rset = ReprojectionSet(img, img, img, ones, ones, img, img)
        with pytest.raises(ValueError, match="per depth scale"):
            depth_loss([rset], [np.ones((8, 8)), np.ones((8, 8))], img, CFG)


class TestSigmoidToDepth:
    def test_limits(self):
        assert sigmoid_to_depth(np.array([700.0]))[0] == pytest.approx(0.1, rel=1e-9)
        assert sigmoid_to_depth(np.array([-700.0]))[0] == pytest.approx(100.0, rel=1e-9)

    def test_zero_logit_hand_value(self):
        # disp = 1/100 + (1/0.1 - 1/100) * 0.5 = 5.005
        d = sigmoid_to_depth(np.array([0.0]), 0.1, 100.0)[0]
        assert d == pytest.approx(1.0 / 5.005, rel=1e-12)
        assert d == pytest.approx(0.19980, abs=1e-5)

    def test_output_in_range(self):
        rng = np.random.default_rng(16)
        d = sigmoid_to_depth(rng.uniform(-30, 30, size=(16, 16)), 0.1, 100.0)
        assert np.all(d >= 0.1 - 1e-12) and np.all(d <= 100.0 + 1e-9)

    def test_invalid_range(self):
        with pytest.raises(ValueError, match="min_depth"):
            sigmoid_to_depth(np.zeros(3), 1.0, 0.5)
