import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from portraitforge.errors import DimensionMismatch
from portraitforge.geometry import (
    AffineMatrix,
    Image,
    Mask,
    feathered_blend,
    paste_face,
    resize_bilinear,
    warp_image,
)

from oracles import box_blur_direct


def gradient_image(h, w):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    r = xs / max(w - 1, 1)
    g = ys / max(h - 1, 1)
    b = (r + g) / 2
    return Image(np.stack([r, g, b], axis=-1))


class TestWarpImage:
    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(2)
        img = Image(rng.random((9, 13, 3)).astype(np.float32))
        out = warp_image(img, AffineMatrix.identity(), 9, 13)
        assert np.array_equal(out.data, img.data)

    def test_integer_translation_shifts_columns(self):
        img = Image(np.array([
            [[0.2, 0.2, 0.2], [0.8, 0.8, 0.8]],
            [[0.4, 0.4, 0.4], [0.6, 0.6, 0.6]],
        ], dtype=np.float32))
        m = AffineMatrix(np.array([[1.0, 0, 1], [0, 1, 0]]))  # shift +1 in x
        out = warp_image(img, m, 2, 2)
        assert np.all(out.data[:, 0, :] == 0.0)
        assert np.array_equal(out.data[:, 1, :], img.data[:, 0, :])

    def test_scale_round_trip_error_small(self):
        img = gradient_image(24, 24)
        up = warp_image(img, AffineMatrix(np.array([[2.0, 0, 0], [0, 2.0, 0]])), 48, 48)
        down = warp_image(up, AffineMatrix(np.array([[0.5, 0, 0], [0, 0.5, 0]])), 24, 24)
        # interior only: the black out-of-bounds fill contaminates the last row/col
        err = np.abs(down.data[:-1, :-1] - img.data[:-1, :-1]).max()
        assert err < 0.02

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_range_preserved(self, seed):
        rng = np.random.default_rng(seed)
        img = Image(rng.random((8, 8, 3)).astype(np.float32))
        m = AffineMatrix(np.array([[1.3, 0.2, -1.0], [-0.1, 0.9, 2.0]]))
        out = warp_image(img, m, 10, 10)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestResize:
    def test_same_dims_is_identity(self):
        img = gradient_image(7, 5)
        assert resize_bilinear(img, 7, 5) is img

    def test_constant_preserved(self):
        img = Image.full(6, 9, 0.4)
        out = resize_bilinear(img, 13, 4)
        np.testing.assert_allclose(out.data, 0.4, atol=1e-6)

    def test_dims(self):
        out = resize_bilinear(gradient_image(11, 17), 23, 9)
        assert (out.h, out.w) == (23, 9)


class TestPasteFace:
    def test_zero_mask_identity_bit_exact(self):
        rng = np.random.default_rng(3)
        template = Image(rng.random((8, 8, 3)).astype(np.float32))
        face = Image(rng.random((8, 8, 3)).astype(np.float32))
        out = paste_face(template, face, AffineMatrix.identity(), Mask.zeros(8, 8))
        assert np.array_equal(out.data, template.data)

    def test_full_mask_identity_transform(self):
        rng = np.random.default_rng(4)
        template = Image(rng.random((8, 8, 3)).astype(np.float32))
        face = Image(rng.random((8, 8, 3)).astype(np.float32))
        full = Mask.from_bool(np.ones((8, 8), dtype=bool))
        out = paste_face(template, face, AffineMatrix.identity(), full)
        assert np.array_equal(out.data, face.data)

    def test_half_plane_mask_pixelwise(self):
        rng = np.random.default_rng(5)
        template = Image(rng.random((8, 8, 3)).astype(np.float32))
        face = Image(rng.random((8, 8, 3)).astype(np.float32))
        half = np.zeros((8, 8), dtype=bool)
        half[:, :4] = True
        out = paste_face(template, face, AffineMatrix.identity(), Mask.from_bool(half))
        assert np.array_equal(out.data[:, :4], face.data[:, :4])
        assert np.array_equal(out.data[:, 4:], template.data[:, 4:])

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            paste_face(gradient_image(8, 8), gradient_image(8, 8),
                       AffineMatrix.identity(), Mask.zeros(4, 4))


class TestFeatheredBlend:
    def test_zero_mask_keeps_base(self):
        base = gradient_image(6, 6)
        patch = Image.full(6, 6, 1.0)
        out = feathered_blend(base, patch, Mask.zeros(6, 6), 2)
        assert np.array_equal(out.data, base.data)

    def test_full_mask_returns_patch_any_feather(self):
        base = gradient_image(6, 6)
        patch = Image.full(6, 6, 0.7)
        for feather in (0, 1, 3):
            out = feathered_blend(base, patch, Mask.from_bool(np.ones((6, 6), bool)), feather)
            np.testing.assert_allclose(out.data, patch.data, atol=1e-7)

    def test_step_mask_ramp_matches_direct_convolution(self):
        h, w = 5, 8
        base = Image.full(h, w, 0.0)
        patch = Image.full(h, w, 1.0)
        step = np.zeros((h, w), dtype=np.float32)
        step[:, 4:] = 1.0
        out = feathered_blend(base, patch, Mask(step), 1)
        expected = box_blur_direct(step, 1)  # blend of 0 and 1 equals the mask itself
        np.testing.assert_allclose(out.data, np.repeat(expected[:, :, None], 3, axis=2),
                                   atol=1e-6)
        # 3-pixel linear ramp around the step on interior rows
        row = out.data[2, :, 0]
        np.testing.assert_allclose(row[2:7], [0.0, 1 / 3, 2 / 3, 1.0, 1.0], atol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(0, 3))
    def test_convex_combination(self, seed, feather):
        rng = np.random.default_rng(seed)
        base = Image(rng.random((7, 7, 3)).astype(np.float32))
        patch = Image(rng.random((7, 7, 3)).astype(np.float32))
        mask = Mask(rng.random((7, 7)).astype(np.float32))
        out = feathered_blend(base, patch, mask, feather)
        lo = np.minimum(base.data, patch.data) - 1e-6
        hi = np.maximum(base.data, patch.data) + 1e-6
        assert np.all(out.data >= lo) and np.all(out.data <= hi)
