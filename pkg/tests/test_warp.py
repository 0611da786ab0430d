import numpy as np
import pytest

from kprefine import warp
from kprefine.geometry import AffineTransform, anchor_to_image, apply_point
from kprefine.keypoints import Keypoint


def bilinear_reference(src, sx, sy):
    """Independent sampler: zero outside the pixel area, border-clamped
    interpolation inside."""
    h, w = src.shape
    if not (-0.5 <= sx <= w - 0.5 and -0.5 <= sy <= h - 0.5):
        return 0.0
    sx = min(max(sx, 0.0), w - 1.0)
    sy = min(max(sy, 0.0), h - 1.0)
    x0, y0 = int(np.floor(sx)), int(np.floor(sy))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = sx - x0, sy - y0
    return (src[y0, x0] * (1 - fx) * (1 - fy)
            + src[y0, x1] * fx * (1 - fy)
            + src[y1, x0] * (1 - fx) * fy
            + src[y1, x1] * fx * fy)


class TestWarpImage:
    def test_identity_bit_exact(self):
        img = np.random.default_rng(1).random((33, 47))
        full, w, h = anchor_to_image(AffineTransform(), 47, 33)
        out = warp.warp_image(img, full, (w, h))
        assert np.array_equal(out, img)

    def test_scale2_2x2_corners(self):
        src = np.array([[0.1, 0.4], [0.7, 1.0]])
        full, w, h = anchor_to_image(AffineTransform(2, 0, 0, 2), 2, 2)
        assert (w, h) == (4, 4)
        out = warp.warp_image(src, full, (w, h))
        # corner samples equal the source corners
        assert out[0, 0] == src[0, 0]
        assert out[0, 3] == src[0, 1]
        assert out[3, 0] == src[1, 0]
        assert out[3, 3] == src[1, 1]
        # interior sample against hand bilinear evaluation
        assert out[1, 1] == pytest.approx(0.325, abs=1e-12)
        # full grid against the independent reference sampler
        from kprefine.geometry import invert
        inv = invert(full)
        for qy in range(4):
            for qx in range(4):
                sx, sy = apply_point(inv, (qx, qy))
                assert out[qy, qx] == pytest.approx(
                    bilinear_reference(src, sx, sy), abs=1e-12)

    def test_constant_image_constant_inside_support(self):
        img = np.full((40, 30), 0.5)
        full, w, h = anchor_to_image(AffineTransform(1, 0.2, 0, 1), 30, 40)
        out = warp.warp_image(img, full, (w, h))
        inside = out != 0.0
        assert inside.any()
        assert np.all(out[inside] == 0.5)

    def test_out_of_source_is_zero(self):
        img = np.full((10, 10), 0.9)
        full, w, h = anchor_to_image(AffineTransform(1, 0.6, 0, 1), 10, 10)
        out = warp.warp_image(img, full, (w, h))
        assert (out == 0.0).any()


class TestNoise:
    def test_sigma_zero_unchanged(self):
        img = np.random.default_rng(2).random((8, 8))
        assert np.array_equal(warp.add_gaussian_noise(img, 0.0, 123), img)

    def test_fixed_seed_deterministic(self):
        img = np.full((16, 16), 0.5)
        a = warp.add_gaussian_noise(img, 0.01, 99)
        b = warp.add_gaussian_noise(img, 0.01, 99)
        assert np.array_equal(a, b)

    def test_sample_std_matches_sigma(self):
        # 65536 samples; clipping is negligible around 0.5
        img = np.full((256, 256), 0.5)
        noisy = warp.add_gaussian_noise(img, 0.01, 7)
        sd = float(np.std(noisy - img))
        assert 0.008 <= sd <= 0.012

    def test_output_clamped(self):
        img = np.zeros((64, 64))
        noisy = warp.add_gaussian_noise(img, 0.5, 5)
        assert noisy.min() >= 0.0 and noisy.max() <= 1.0


class TestBackproject:
    def test_identity(self):
        kps = [Keypoint(5.0, 5.0, 1.0, 3)]
        out = warp.backproject_keypoints(kps, AffineTransform(), (10, 10))
        assert out == kps

    def test_inverse_scaling(self):
        kps = [Keypoint(10.0, 6.0, 1.0, 1)]
        out = warp.backproject_keypoints(
            kps, AffineTransform(2, 0, 0, 2), (10, 10))
        assert out[0].x == pytest.approx(5.0)
        assert out[0].y == pytest.approx(3.0)
        assert out[0].warp_id == 1

    def test_out_of_bounds_dropped(self):
        # maps to (-1, 4): discarded, not clamped
        kps = [Keypoint(-2.0, 8.0, 1.0, 0)]
        out = warp.backproject_keypoints(
            kps, AffineTransform(2, 0, 0, 2), (10, 10))
        assert out == []

    def test_boundary_is_half_open(self):
        kps = [Keypoint(0.0, 0.0, 1.0, 0), Keypoint(10.0, 5.0, 1.0, 0)]
        out = warp.backproject_keypoints(kps, AffineTransform(), (10, 10))
        assert len(out) == 1 and out[0].x == 0.0


class TestGeometryConsistency:
    def test_warp_then_backproject_recovers_source(self, default_augmentations):
        rng = np.random.default_rng(3)
        pts = rng.uniform((1, 1), (63, 47), size=(50, 2))
        for t in default_augmentations.transforms:
            full, ow, oh = anchor_to_image(t, 64, 48)
            warped = [Keypoint(*apply_point(full, tuple(p))) for p in pts]
            back = warp.backproject_keypoints(warped, full, (64, 48))
            assert len(back) == len(pts)
            for src, rec in zip(pts, back):
                assert abs(rec.x - src[0]) <= 1e-6
                assert abs(rec.y - src[1]) <= 1e-6


class TestSupportMask:
    def test_identity_support_full(self):
        full, w, h = anchor_to_image(AffineTransform(), 12, 9)
        mask = warp.support_mask((12, 9), full, (w, h))
        assert mask.all()

    def test_shear_support_partial(self):
        full, w, h = anchor_to_image(AffineTransform(1, 0.6, 0, 1), 20, 20)
        mask = warp.support_mask((20, 20), full, (w, h))
        assert mask.any() and not mask.all()
