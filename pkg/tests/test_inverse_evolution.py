"""Inverse-evolution stack: stencil examples, the spectral law, and the
amplification properties that make the layers useful."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ielkit import ops
from ielkit.errors import ConfigError
from ielkit.inverse_evolution import (
    IELConfig,
    iel_apply,
    iel_spectral_oracle,
    iel_step,
    laplacian,
    spectral_multiplier,
)
from ielkit.metrics import high_freq_energy_ratio


class TestLaplacian:
    @pytest.mark.parametrize("boundary", ["replicate", "periodic"])
    def test_constant_in_null_space(self, boundary):
        x = np.full((2, 5, 6), 7.0)
        assert np.all(laplacian(x, boundary) == 0.0)

    def test_delta_periodic(self):
        x = np.zeros((1, 5, 5))
        x[0, 2, 2] = 1.0
        out = laplacian(x, "periodic")
        assert out[0, 2, 2] == -4.0
        for i, j in ((1, 2), (3, 2), (2, 1), (2, 3)):
            assert out[0, i, j] == 1.0
        assert np.count_nonzero(out) == 5

    def test_replicate_matches_stencil_loop(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 6, 6))
        out = laplacian(x, "replicate")
        ref = np.zeros_like(x)
        for i in range(6):
            for j in range(6):
                acc = -4.0 * x[0, i, j]
                for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    si = min(max(i + di, 0), 5)
                    sj = min(max(j + dj, 0), 5)
                    acc += x[0, si, sj]
                ref[0, i, j] = acc
        assert np.abs(out - ref).max() < 1e-12


class TestIelStep:
    def test_constant_unchanged(self):
        x = np.full((1, 4, 4), 3.25)
        assert np.array_equal(iel_step(x, 0.1, "periodic"), x)

    def test_delta_arithmetic(self):
        x = np.zeros((1, 5, 5))
        x[0, 2, 2] = 1.0
        out = iel_step(x, 0.1, "periodic")
        assert abs(out[0, 2, 2] - 1.4) < 1e-14
        for i, j in ((1, 2), (3, 2), (2, 1), (2, 3)):
            assert abs(out[0, i, j] + 0.1) < 1e-14

    def test_pure_mode_amplified_by_multiplier(self):
        # mode (k=2, l=0) on 8x8, tau=0.1 -> gain 1 + 0.4 sin^2(2 pi / 8)
        h = w = 8
        m = np.arange(h)[:, None]
        x = np.cos(2 * np.pi * 2 * m / h) * np.ones((1, h, w))
        out = iel_step(x, 0.1, "periodic")
        gain = 1 + 0.4 * np.sin(np.pi * 2 / h) ** 2
        assert abs(gain - 1.2) < 1e-12
        z = ops.fft2(out)
        z_in = ops.fft2(x)
        nz = np.abs(z_in[0]) > 1e-9
        assert np.abs(z[0][nz] / z_in[0][nz] - gain).max() < 1e-10

    def test_invalid_tau(self):
        with pytest.raises(ConfigError):
            iel_step(np.zeros((1, 4, 4)), 0.0)


class TestIelApply:
    def test_depth_zero_identity(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 6, 6))
        out = iel_apply(x, IELConfig(depth=0, tau=0.1))
        assert np.array_equal(out, x)

    def test_constant_unchanged_any_depth(self):
        x = np.full((1, 8, 8), -2.5)
        for boundary in ("replicate", "periodic"):
            out = iel_apply(x, IELConfig(depth=5, tau=0.1, boundary=boundary))
            assert np.abs(out - x).max() < 1e-12

    def test_per_mode_power_law(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 8, 8))
        cfg = IELConfig(depth=5, tau=0.1, boundary="periodic")
        z_out = ops.fft2(iel_apply(x, cfg))
        z_ref = ops.fft2(x) * spectral_multiplier(8, 8, cfg)
        rel = np.abs(z_out - z_ref) / np.maximum(np.abs(z_ref), 1e-300)
        assert rel.max() < 1e-8

    @given(
        a=st.floats(-2, 2, allow_nan=False),
        b=st.floats(-2, 2, allow_nan=False),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=20, deadline=None)
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(1, 6, 6))
        v = rng.normal(size=(1, 6, 6))
        cfg = IELConfig(depth=4, tau=0.1, boundary="replicate")
        lhs = iel_apply(a * u + b * v, cfg)
        rhs = a * iel_apply(u, cfg) + b * iel_apply(v, cfg)
        assert np.abs(lhs - rhs).max() < 1e-10

    def test_depth_bounds_validated(self):
        with pytest.raises(ConfigError):
            IELConfig(depth=65)
        with pytest.raises(ConfigError):
            IELConfig(depth=5, tau=0.6)
        with pytest.raises(ConfigError):
            IELConfig(boundary="mirror")


class TestSpectralOracle:
    def test_depth_zero_identity(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1, 8, 8))
        out = iel_spectral_oracle(x, IELConfig(depth=0, boundary="periodic"))
        assert np.abs(out - x).max() < 1e-12

    def test_constant_unchanged(self):
        x = np.full((2, 6, 6), 1.5)
        out = iel_spectral_oracle(x, IELConfig(depth=7, boundary="periodic"))
        assert np.abs(out - x).max() < 1e-12

    def test_agrees_with_stencil_domain(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2, 16, 16))
        cfg = IELConfig(depth=5, tau=0.1, boundary="periodic")
        a = iel_apply(x, cfg)
        b = iel_spectral_oracle(x, cfg)
        assert np.abs(a - b).max() < 1e-8

    def test_replicate_unsupported(self):
        with pytest.raises(ConfigError):
            iel_spectral_oracle(np.zeros((1, 4, 4)), IELConfig(depth=2, boundary="replicate"))


class TestAmplificationProperties:
    def test_multiplier_strictly_increasing_in_depth(self):
        # per-mode factor (1 + tau s)^D strictly grows with D wherever s > 0
        h = w = 8
        for d in range(0, 8):
            m_lo = spectral_multiplier(h, w, IELConfig(depth=d, tau=0.1, boundary="periodic"))
            m_hi = spectral_multiplier(h, w, IELConfig(depth=d + 1, tau=0.1, boundary="periodic"))
            assert m_hi[0, 0] == m_lo[0, 0] == 1.0
            mask = np.ones((h, w), dtype=bool)
            mask[0, 0] = False
            assert np.all(m_hi[mask] > m_lo[mask])

    def test_high_freq_ratio_nondecreasing_in_depth(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(1, 8, 8))
        ratios = [
            high_freq_energy_ratio(
                iel_apply(x, IELConfig(depth=d, tau=0.1, boundary="periodic")), 0.5
            )
            for d in (0, 1, 2, 5, 10)
        ]
        assert all(b >= a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] > ratios[0]

    def test_single_pixel_defect_amplified(self):
        # a one-hot class plane with one hole: after the stack the defect
        # footprint exceeds the original one-pixel difference
        clean = np.zeros((1, 16, 16))
        clean[0, 4:12, 4:12] = 1.0
        holed = clean.copy()
        holed[0, 8, 8] = 0.0
        cfg = IELConfig(depth=5, tau=0.1, boundary="periodic")
        diff = np.abs(iel_apply(holed, cfg) - iel_apply(clean, cfg)).max()
        assert diff > 1.0  # original difference had max-abs exactly 1
