"""Tests for the sparsity-inducing entry distribution."""

import numpy as np
import pytest
from scipy import integrate, stats

from polarprior.exceptions import DomainError
from polarprior.shrinkage import (
    ShrinkageLaw,
    scale_mixture_sample,
    shrinkage_logpdf,
    shrinkage_sample,
)


def max_cdf_gap(samples, cdf):
    """One-sample Kolmogorov distance between sorted samples and a CDF."""
    x = np.sort(samples)
    n = len(x)
    f = cdf(x)
    i = np.arange(1, n + 1)
    return max(np.max(np.abs(f - i / n)), np.max(np.abs(f - (i - 1) / n)))


def two_sample_gap(a, b):
    """Max empirical-CDF gap between two samples."""
    grid = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), grid, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), grid, side="right") / len(b)
    return np.max(np.abs(fa - fb))


class TestLaw:
    def test_rejects_bad_ell(self):
        for ell in [0.0, -0.2, 1.5]:
            with pytest.raises(DomainError):
                ShrinkageLaw(ell)

    def test_boundary_ell_one_allowed(self):
        ShrinkageLaw(1.0)


class TestLogpdf:
    def test_standard_normal_at_ell_one(self):
        law = ShrinkageLaw(1.0)
        np.testing.assert_allclose(shrinkage_logpdf(0.0, law), -0.9189385, atol=1e-6)
        np.testing.assert_allclose(shrinkage_logpdf(1.0, law), -1.4189385, atol=1e-6)

    def test_rejects_zero_for_small_ell(self):
        with pytest.raises(DomainError):
            shrinkage_logpdf(0.0, ShrinkageLaw(0.3))

    def test_density_integrates_to_one(self):
        for ell in [0.1, 0.3, 0.7, 1.0]:
            law = ShrinkageLaw(ell)
            val, err = integrate.quad(
                lambda z: np.exp(shrinkage_logpdf(z, law)),
                0.0,
                60.0,
                points=[1.0],
                limit=200,
            )
            np.testing.assert_allclose(2.0 * val, 1.0, atol=1e-8)

    def test_value_against_quadrature_normalization(self):
        # Normalize the bare kernel numerically and compare at z = 0.5.
        ell = 0.3
        kernel = lambda z: np.abs(z) ** (ell - 1.0) * np.exp(-0.5 * ell * z * z)
        norm, _ = integrate.quad(kernel, 0, np.inf)
        expected = np.log(kernel(0.5) / (2.0 * norm))
        np.testing.assert_allclose(
            shrinkage_logpdf(0.5, ShrinkageLaw(ell)), expected, atol=1e-8
        )

    def test_kernel_limit_small_ell(self):
        # Pointwise limit of the kernel as ell -> 0 is 1/|z|.
        ell = 1e-6
        for z in [0.3, 1.0, 2.5]:
            kernel = np.abs(z) ** (ell - 1.0) * np.exp(-0.5 * ell * z * z)
            np.testing.assert_allclose(kernel, 1.0 / abs(z), rtol=1e-4)


class TestGammaRouteSampler:
    def test_moments(self):
        rng = np.random.default_rng(42)
        ell = 0.5
        z = shrinkage_sample(10**6, ShrinkageLaw(ell), rng)
        assert abs(z.mean()) < 0.01
        assert 0.99 < z.var() < 1.01
        np.testing.assert_allclose(np.mean(z**4), 1.0 + 2.0 / ell, rtol=0.02)

    def test_squared_draws_are_gamma(self):
        rng = np.random.default_rng(7)
        ell = 0.2
        z = shrinkage_sample(10**5, ShrinkageLaw(ell), rng)
        gap = max_cdf_gap(z**2, stats.gamma(a=ell / 2, scale=2 / ell).cdf)
        assert gap < 0.01

    def test_reproducible(self):
        law = ShrinkageLaw(0.4)
        a = shrinkage_sample(100, law, np.random.default_rng(3))
        b = shrinkage_sample(100, law, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_rejects_bad_n(self):
        with pytest.raises(DomainError):
            shrinkage_sample(0, ShrinkageLaw(0.5), np.random.default_rng(0))


class TestScaleMixtureSampler:
    def test_matches_gamma_route(self):
        ell = 0.5
        z1 = shrinkage_sample(10**5, ShrinkageLaw(ell), np.random.default_rng(1))
        z2, _ = scale_mixture_sample(10**5, ShrinkageLaw(ell), np.random.default_rng(2))
        assert two_sample_gap(z1, z2) < 0.01

    def test_theta_mean(self):
        # Beta(ell/2, (1-ell)/2) has mean ell.
        rng = np.random.default_rng(4)
        _, theta = scale_mixture_sample(10**6, ShrinkageLaw(0.3), rng)
        np.testing.assert_allclose(theta.mean(), 0.3, atol=0.005)

    def test_unit_variance(self):
        rng = np.random.default_rng(5)
        z, _ = scale_mixture_sample(10**6, ShrinkageLaw(0.5), rng)
        np.testing.assert_allclose(z.var(), 1.0, atol=0.01)

    def test_rejects_ell_boundary(self):
        with pytest.raises(DomainError):
            scale_mixture_sample(10, ShrinkageLaw(1.0), np.random.default_rng(0))
