import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kprefine import geometry
from kprefine.errors import InvalidConfig, SingularTransform
from kprefine.geometry import (AffineTransform, WarpConfig, anchor_to_image,
                               apply_point, build_augmentation_set, invert)


class TestApplyPoint:
    def test_identity(self):
        assert apply_point(AffineTransform(), (3.5, 7.25)) == (3.5, 7.25)

    def test_isotropic_scale(self):
        t = AffineTransform(1.5, 0, 0, 1.5)
        assert apply_point(t, (2.0, 4.0)) == (3.0, 6.0)

    def test_shear_x(self):
        # x' = x + 0.2 y evaluated by hand
        t = AffineTransform(1, 0.2, 0, 1)
        assert apply_point(t, (10.0, 5.0)) == (11.0, 5.0)


class TestInvert:
    def test_identity(self):
        assert invert(AffineTransform()) == AffineTransform()

    def test_reciprocal_scale(self):
        inv = invert(AffineTransform(0.5, 0, 0, 0.5))
        assert inv.a11 == pytest.approx(2.0)
        assert inv.a22 == pytest.approx(2.0)
        assert inv.a12 == inv.a21 == 0.0

    def test_shear_closed_form(self):
        # closed-form 2x2 inverse of a shear negates the factor
        inv = invert(AffineTransform(1, 0.6, 0, 1))
        assert inv.a12 == pytest.approx(-0.6)
        assert inv.a11 == pytest.approx(1.0)
        assert inv.a22 == pytest.approx(1.0)

    def test_matches_linalg_inverse(self):
        t = AffineTransform(1.2, 0.3, -0.4, 0.9, 5.0, -2.0)
        expected = np.linalg.inv(t.matrix3())
        np.testing.assert_allclose(invert(t).matrix3(), expected, atol=1e-12)

    def test_singular_raises(self):
        with pytest.raises(SingularTransform):
            invert(AffineTransform(1.0, 2.0, 0.5, 1.0))  # det = 0

    def test_roundtrip_tolerance(self):
        t = AffineTransform(1.5, 0.6, -0.2, 0.75, 3.0, -7.0)
        inv = invert(t)
        for p in [(0.0, 0.0), (12.3, -4.5), (1000.0, 999.5)]:
            q = apply_point(inv, apply_point(t, p))
            assert abs(q[0] - p[0]) < 1e-9
            assert abs(q[1] - p[1]) < 1e-9


class TestAugmentationSet:
    def test_paper_defaults_give_21(self, default_augmentations):
        assert len(default_augmentations) == 21
        assert default_augmentations.ids == tuple(range(21))

    def test_entry_zero_is_identity(self, default_augmentations):
        assert default_augmentations.transforms[0] == AffineTransform()

    def test_empty_shears_give_13(self):
        cfg = WarpConfig(shears=())
        assert len(build_augmentation_set(cfg)) == 13

    def test_iso_125_scaling_arithmetic(self, default_augmentations):
        t = default_augmentations.transforms[2]  # order: identity, 1.5, 1.25
        assert apply_point(t, (4.0, 4.0)) == (5.0, 5.0)

    def test_zero_scale_rejected(self):
        with pytest.raises(InvalidConfig):
            build_augmentation_set(WarpConfig(iso_scales=(1.0, 0.0)))
        with pytest.raises(InvalidConfig):
            build_augmentation_set(WarpConfig(aniso_scales=(0.0,)))

    def test_deterministic_rebuild(self):
        a = build_augmentation_set()
        b = build_augmentation_set()
        assert a == b

    def test_all_uniform_distortions(self, default_augmentations):
        # every transform is linear (no translation), hence distorts uniformly
        for t in default_augmentations.transforms:
            assert t.tx == 0.0 and t.ty == 0.0
            assert abs(t.det()) > 1e-12


class TestRoundTripOverImageDomain:
    def test_all_default_transforms(self, default_augmentations):
        rng = np.random.default_rng(42)
        pts = rng.uniform((0, 0), (640, 480), size=(1000, 2))
        for t in default_augmentations.transforms:
            full, _, _ = anchor_to_image(t, 640, 480)
            inv = invert(full)
            for p in pts:
                q = apply_point(inv, apply_point(full, tuple(p)))
                assert abs(q[0] - p[0]) <= 1e-6
                assert abs(q[1] - p[1]) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(
    a11=st.floats(0.2, 3.0), a22=st.floats(0.2, 3.0),
    a12=st.floats(-0.8, 0.8), a21=st.floats(-0.8, 0.8),
    tx=st.floats(-100, 100), ty=st.floats(-100, 100),
    x=st.floats(-500, 500), y=st.floats(-500, 500),
)
def test_roundtrip_property(a11, a22, a12, a21, tx, ty, x, y):
    t = AffineTransform(a11, a12, a21, a22, tx, ty)
    if abs(t.det()) < 1e-3:
        return
    q = apply_point(invert(t), apply_point(t, (x, y)))
    assert abs(q[0] - x) < 1e-6
    assert abs(q[1] - y) < 1e-6


class TestAnchorToImage:
    def test_identity_exact(self):
        full, w, h = anchor_to_image(AffineTransform(), 64, 48)
        assert (w, h) == (64, 48)
        assert full == AffineTransform()

    def test_canvas_covers_scaled_area(self):
        full, w, h = anchor_to_image(AffineTransform(1.5, 0, 0, 1.5), 64, 48)
        assert (w, h) == (96, 72)
        # all four warped area corners stay inside the canvas area
        for cx, cy in [(-0.5, -0.5), (63.5, -0.5), (-0.5, 47.5), (63.5, 47.5)]:
            qx, qy = apply_point(full, (cx, cy))
            assert -0.5 - 1e-9 <= qx <= w - 0.5 + 1e-9
            assert -0.5 - 1e-9 <= qy <= h - 0.5 + 1e-9

    def test_center_is_fixed_point_of_centered_map(self):
        # before the canvas shift, the image center maps to itself: verify
        # the shift is the only translation (center maps to canvas center)
        t = AffineTransform(2.0, 0, 0, 2.0)
        full, w, h = anchor_to_image(t, 64, 64)
        cx, cy = (64 - 1) / 2, (64 - 1) / 2
        qx, qy = apply_point(full, (cx, cy))
        assert qx == pytest.approx((w - 1) / 2, abs=1e-9)
        assert qy == pytest.approx((h - 1) / 2, abs=1e-9)
