"""Bit-parity between the compiled kernel core and the numpy fallback."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from portraitforge import kernels

pure = kernels.get_backend("python")

needs_compiled = pytest.mark.skipif(
    not kernels.compiled_available(),
    reason="compiled kernel extension not built",
)

if kernels.compiled_available():
    compiled = kernels.get_backend("compiled")


def rand_image(seed, h, w, c=3):
    rng = np.random.default_rng(seed)
    return rng.random((h, w, c)).astype(np.float32)


@needs_compiled
class TestBitParity:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 40), st.integers(1, 40))
    def test_warp_bilinear(self, seed, h, w):
        rng = np.random.default_rng(seed)
        img = rng.random((h, w, 3)).astype(np.float32)
        inv = np.array([
            [rng.uniform(-2, 2), rng.uniform(-0.5, 0.5), rng.uniform(-10, 10)],
            [rng.uniform(-0.5, 0.5), rng.uniform(-2, 2), rng.uniform(-10, 10)],
        ])
        for clamp in (False, True):
            a = pure.warp_bilinear(img, inv, h + 3, w + 5, clamp)
            b = compiled.warp_bilinear(img, inv, h + 3, w + 5, clamp)
            assert np.array_equal(a, b)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 40), st.integers(1, 40),
           st.integers(0, 6))
    def test_box_blur(self, seed, h, w, radius):
        img = rand_image(seed, h, w)
        a = pure.box_blur(img, radius)
        b = compiled.box_blur(img, radius)
        assert np.array_equal(a, b)
        gray = img[:, :, 0]
        assert np.array_equal(pure.box_blur(gray, radius),
                              compiled.box_blur(gray, radius))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 48), st.integers(1, 48),
           st.integers(0, 9))
    def test_disc_dilate(self, seed, h, w, radius):
        rng = np.random.default_rng(seed)
        mask = rng.random((h, w)) > 0.8
        a = pure.disc_dilate(mask, radius)
        b = compiled.disc_dilate(mask, radius)
        assert np.array_equal(a, b)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**64 - 1), st.integers(1, 32), st.integers(1, 32))
    def test_noise_field(self, seed, h, w):
        a = pure.noise_field(seed, h, w)
        b = compiled.noise_field(seed, h, w)
        assert np.array_equal(a, b)
        assert a.dtype == np.float64
        assert a.min() >= -1.0 and a.max() < 1.0


class TestKernelContracts:
    def test_backend_selection_env(self, monkeypatch):
        monkeypatch.setenv("EP_KERNELS", "python")
        assert kernels._load_backend().BACKEND == "python"

    def test_unknown_backend_name(self):
        with pytest.raises(ValueError):
            kernels.get_backend("fortran")

    def test_noise_reproducible_across_calls(self):
        a = pure.noise_field(42, 8, 8)
        b = pure.noise_field(42, 8, 8)
        assert np.array_equal(a, b)

    def test_blur_constant_fixed_point(self):
        img = np.full((9, 7, 3), 0.37, dtype=np.float32)
        for radius in (1, 2, 4):
            out = pure.box_blur(img, radius)
            assert np.array_equal(out, img)

    def test_dilate_radius_zero_identity(self):
        rng = np.random.default_rng(0)
        mask = rng.random((16, 16)) > 0.5
        assert np.array_equal(pure.disc_dilate(mask, 0), mask)
