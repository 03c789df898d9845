import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hwmnet.errors import InvalidArgument
from hwmnet.metrics import MetricReport, gaussian_window, psnr, ssim


class TestPSNR:
    def test_identical_is_capped(self, rng):
        x = rng.random((3, 16, 16))
        assert psnr(x, x) == 100.0

    def test_half_offset(self):
        assert psnr(np.full((3, 8, 8), 0.5), np.zeros((3, 8, 8))) == pytest.approx(6.0206, abs=1e-4)

    def test_sixteen_levels(self):
        d = np.full((3, 8, 8), 16 / 255)
        assert psnr(d, np.zeros_like(d)) == pytest.approx(24.048, abs=1e-3)

    def test_one_global_mse(self, rng):
        a, b = rng.random((2, 3, 8, 8)), rng.random((2, 3, 8, 8))
        assert psnr(a, b) == pytest.approx(-10 * math.log10(np.mean((a - b) ** 2)), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))

    @settings(max_examples=30, deadline=None)
    @given(s1=st.floats(1e-3, 0.2), s2=st.floats(1e-3, 0.2))
    def test_monotone_in_noise(self, s1, s2):
        if abs(s1 - s2) < 1e-6:
            return
        x = np.random.default_rng(0).random((3, 16, 16))
        n = np.random.default_rng(1).standard_normal((3, 16, 16))
        lo, hi = sorted((s1, s2))
        assert psnr(x + lo * n, x) > psnr(x + hi * n, x)


class TestSSIM:
    def test_window(self):
        g = gaussian_window()
        assert g.shape == (11,) and g.sum() == pytest.approx(1.0) and g.argmax() == 5

    def test_constants(self):
        a, b = np.full((3, 32, 32), 0.75), np.full((3, 32, 32), 0.25)
        assert ssim(a, b) == pytest.approx(0.6000, abs=1e-3)

    def test_identity(self, rng):
        x = rng.random((3, 32, 32))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_too_small(self):
        with pytest.raises(InvalidArgument):
            ssim(np.zeros((3, 10, 32)), np.zeros((3, 10, 32)))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), noise=st.floats(0.0, 0.5))
    def test_symmetric_bounded_flip_invariant(self, seed, noise):
        r = np.random.default_rng(seed)
        a = r.random((3, 16, 20))
        b = np.clip(a + noise * r.standard_normal(a.shape), 0, 1)
        v = ssim(a, b)
        assert -1.0 <= v <= 1.0 + 1e-12
        assert v == pytest.approx(ssim(b, a), abs=1e-12)
        assert v == pytest.approx(ssim(a[..., ::-1], b[..., ::-1]), abs=1e-10)
        assert v == pytest.approx(ssim(a[..., ::-1, :], b[..., ::-1, :]), abs=1e-10)


def test_report(rng):
    rep = MetricReport()
    x = rng.random((3, 16, 16))
    rep.add("a.png", x, x)
    rep.add("b.png", np.full((3, 16, 16), 0.5), np.zeros((3, 16, 16)))
    assert rep.mean_psnr == pytest.approx((100 + 6.0206) / 2, abs=1e-4)
    csv = rep.to_csv().splitlines()
    assert csv[0] == "image,psnr_db,ssim" and csv[1].startswith("a.png,100.000000,1.000000")
    assert csv[-1].startswith("mean,")
    assert "mean" in rep.to_text()
    assert math.isnan(MetricReport().mean_psnr)
