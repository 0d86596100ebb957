"""Tests for the smooth model-based SVD."""

import numpy as np
import pytest

from polarprior.exceptions import DomainError, EmptyChain
from polarprior.hmc import gradient_audit
from polarprior.models.svd import (
    SvdHyper,
    center_columns,
    default_hyper,
    invgamma_from_mean_sd,
    point_estimate_v,
    principal_angle,
    simulate_smooth_svd,
    svd_model_logpost,
    svd_model_whitened,
)


def toy_hyper(y):
    return default_hyper(y, rho_mean=5.0, rho_sd=2.0)


class TestCenterColumns:
    def test_constant_matrix(self):
        np.testing.assert_array_equal(center_columns(np.full((4, 3), 7.0)), np.zeros((4, 3)))

    def test_single_row(self):
        np.testing.assert_array_equal(center_columns(np.array([[1.0, -2.0]])), [[0.0, 0.0]])

    def test_column_sums_vanish(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((5, 3)) * 10 + 3
        out = center_columns(y)
        np.testing.assert_allclose(out.sum(axis=0), 0.0, atol=1e-12)


class TestInvGammaFromMeanSd:
    def test_moment_equations(self):
        alpha, beta = invgamma_from_mean_sd(1.0, 1.0)
        assert alpha == pytest.approx(3.0)
        assert beta == pytest.approx(2.0)

    def test_length_scale_prior_values(self):
        mean = 200.0 / (2.0 * np.pi)
        alpha, beta = invgamma_from_mean_sd(mean, 10.0)
        assert alpha == pytest.approx(12.1329, abs=1e-3)
        assert beta == pytest.approx(354.39, abs=0.1)

    def test_monte_carlo_moments(self):
        alpha, beta = invgamma_from_mean_sd(31.831, 10.0)
        rng = np.random.default_rng(1)
        draws = 1.0 / rng.gamma(shape=alpha, scale=1.0 / beta, size=10**6)
        assert abs(draws.mean() - 31.831) / 31.831 < 0.01
        assert abs(draws.std() - 10.0) / 10.0 < 0.01

    def test_domain(self):
        with pytest.raises(DomainError):
            invgamma_from_mean_sd(-1.0, 1.0)


class TestGradients:
    def test_centered_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        y = center_columns(rng.standard_normal((12, 15)))
        model = svd_model_logpost(y, 2, toy_hyper(y))
        point = 0.3 * rng.standard_normal(model.dim)
        assert gradient_audit(model, point, n_coords=model.dim, rel_tol=1e-5) < 1e-5

    def test_whitened_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        y = center_columns(rng.standard_normal((10, 14)))
        model = svd_model_whitened(y, 2, toy_hyper(y))
        point = 0.3 * rng.standard_normal(model.dim)
        assert gradient_audit(model, point, n_coords=model.dim, rel_tol=1e-5) < 1e-5

    def test_parameterizations_same_posterior_value(self):
        # At matched points (x_v = root(rho) w) the two densities differ
        # by the (w <-> x_v) change of variables: value_c - value_w equals
        # -k/2 logdet(Omega) evaluated at rho, for any w.
        rng = np.random.default_rng(4)
        y = center_columns(rng.standard_normal((8, 10)))
        hyper = toy_hyper(y)
        mc = svd_model_logpost(y, 2, hyper)
        mw = svd_model_whitened(y, 2, hyper)
        n, p, k = 8, 10, 2

        # Keep rho small so Omega is well conditioned and the whitening
        # jitter is negligible relative to its spectrum.
        w = rng.standard_normal((p, k))
        shared = {
            "xu": rng.standard_normal((n, k)),
            "d": np.array([3.0, 2.0]),
            "sigma2": np.asarray(1.3),
            "rho": np.asarray(1.2),
        }
        root = mw.v_root_cache.get(1.2)[0]
        uc = mc.unconstrain({**shared, "xv": root @ w})
        uw = mw.unconstrain({**shared, "w": w})
        vc, _ = mc.logpdf_grad(uc)
        vw, _ = mw.logpdf_grad(uw)
        omega_j = root @ root
        sign, logdet = np.linalg.slogdet(omega_j)
        np.testing.assert_allclose(vc - vw, -0.5 * k * logdet, atol=1e-3)

    def test_flat_likelihood_limit(self):
        # As sigma^2 grows the likelihood no longer depends on (U, D, V).
        rng = np.random.default_rng(5)
        y = center_columns(rng.standard_normal((6, 8)))
        model = svd_model_logpost(y, 2, toy_hyper(y))
        base = {
            "xu": rng.standard_normal((6, 2)),
            "xv": rng.standard_normal((8, 2)),
            "d": np.array([2.0, 1.0]),
            "sigma2": np.asarray(1e8),
            "rho": np.asarray(4.0),
        }
        v1, _ = model.logpdf_grad(model.unconstrain(base))
        base2 = dict(base)
        base2["d"] = np.array([4.0, 3.0])
        base2["xu"] = rng.standard_normal((6, 2))
        v2, _ = model.logpdf_grad(model.unconstrain(base2))
        # Differences now come only from the (xu, d) priors plus the
        # log-transform Jacobian of d.
        tau2 = toy_hyper(y).tau ** 2
        prior1 = (
            -0.5 * np.sum(base["xu"] ** 2)
            - 0.5 * np.sum(base["d"] ** 2) / tau2
            + np.sum(np.log(base["d"]))
        )
        prior2 = (
            -0.5 * np.sum(base2["xu"] ** 2)
            - 0.5 * np.sum(base2["d"] ** 2) / tau2
            + np.sum(np.log(base2["d"]))
        )
        lik_gap = abs((v1 - prior1) - (v2 - prior2))
        assert lik_gap < 1e-3

    def test_column_sign_flip_invariance(self):
        rng = np.random.default_rng(6)
        y = center_columns(rng.standard_normal((9, 11)))
        model = svd_model_logpost(y, 2, toy_hyper(y))
        values = {
            "xu": rng.standard_normal((9, 2)),
            "xv": rng.standard_normal((11, 2)),
            "d": np.array([3.0, 1.5]),
            "sigma2": np.asarray(0.8),
            "rho": np.asarray(3.0),
        }
        v1, _ = model.logpdf_grad(model.unconstrain(values))
        flip = np.array([-1.0, 1.0])
        values["xu"] = values["xu"] * flip
        values["xv"] = values["xv"] * flip
        v2, _ = model.logpdf_grad(model.unconstrain(values))
        np.testing.assert_allclose(v1, v2, atol=1e-10)

    def test_hyper_validation(self):
        with pytest.raises(DomainError):
            SvdHyper(nu_err=-1.0, s2=1.0, tau=1.0, alpha=1.0, beta=1.0)


class TestPointEstimateV:
    def test_single_draw_recovers_v(self):
        rng = np.random.default_rng(7)
        u = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        v = np.linalg.qr(rng.standard_normal((9, 2)))[0]
        d = np.array([5.0, 2.0])
        est = point_estimate_v(u[None], d[None], v[None], 2)
        # Same column span and unit columns, signs fixed by convention.
        assert principal_angle(est, v) < 1e-8

    def test_opposite_sign_draws(self):
        rng = np.random.default_rng(8)
        u = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        v = np.linalg.qr(rng.standard_normal((9, 2)))[0]
        d = np.array([5.0, 2.0])
        u_draws = np.stack([u, -u])
        v_draws = np.stack([v, -v])
        d_draws = np.stack([d, d])
        # The mean of U D V^T is unchanged (signs cancel in the product),
        # so the estimate matches the single-draw case.
        est = point_estimate_v(u_draws, d_draws, v_draws, 2)
        assert principal_angle(est, v) < 1e-8

    def test_sign_convention(self):
        rng = np.random.default_rng(9)
        u = np.linalg.qr(rng.standard_normal((5, 1)))[0]
        v = np.linalg.qr(rng.standard_normal((7, 1)))[0]
        est = point_estimate_v(u[None], np.array([[3.0]]), v[None], 1)
        j = np.argmax(np.abs(est[:, 0]))
        assert est[j, 0] > 0

    def test_empty(self):
        with pytest.raises(EmptyChain):
            point_estimate_v(np.empty((0, 3, 1)), np.empty((0, 1)), np.empty((0, 4, 1)), 1)


class TestSimulation:
    def test_simulated_shapes_and_snr(self):
        rng = np.random.default_rng(10)
        y, truth = simulate_smooth_svd(20, 30, 2, rho=5.0, snr=4.0, rng=rng)
        assert y.shape == (20, 30)
        np.testing.assert_allclose(
            np.sqrt(np.sum(truth["d"] ** 2) / (20 * 30)), 4.0, rtol=1e-12
        )
        np.testing.assert_allclose(truth["v"].T @ truth["v"], np.eye(2), atol=1e-10)
