"""Model-based SVD with a smoothness prior on the right singular vectors.

Column-centered data Y (n x p) is modeled as Y = U D V^T + sigma E with
semi-orthogonal U and V, positive diagonal D, and standard normal errors.
U gets a uniform prior; V is tied to a squared-exponential correlation
matrix Omega(rho) whose length scale rho is learned, so the columns of V
behave a priori like discretized smooth curves.  Both U and V are
parameterized through unconstrained expansion matrices and the polar
projection.

Two parameterizations of the V expansion are provided: the centered one
(density stated directly in x_v, with the Omega log-determinant and
quadratic form), and a whitened one (x_v = Omega^{1/2} w with w standard
normal) that the estimator samples with.  They induce the same posterior
on (U, D, V, sigma^2, rho); the whitened form avoids the extreme
stiffness of near-singular smooth kernels.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..correlation import se_correlation_with_gradient
from ..exceptions import DomainError, EmptyChain, NotPositiveDefinite
from ..hmc import HmcConfig, hmc_sample
from ..stiefel import polar_project, polar_pullback_grad
from ..transforms import ParameterBlock, Positive, TransformedDensity

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

_LOG_2PI = np.log(2.0 * np.pi)
_JITTER = 1e-8


@dataclass(frozen=True)
class SvdHyper:
    """Hyperparameters: 1/sigma^2 ~ Gamma(nu_err/2, rate nu_err s2 / 2),
    d_i ~ Normal(0, tau^2) truncated to d_i > 0, 1/rho ~ Gamma(alpha, rate beta)."""

    nu_err: float
    s2: float
    tau: float
    alpha: float
    beta: float

    def __post_init__(self):
        vals = (self.nu_err, self.s2, self.tau, self.alpha, self.beta)
        if any(not (v > 0.0) for v in vals):
            raise DomainError(f"all hyperparameters must be positive, got {vals}")


def invgamma_from_mean_sd(mean: float, sd: float) -> tuple[float, float]:
    """Shape/scale of the inverse gamma with the requested mean and SD.

    Solving beta/(alpha-1) = mean and beta^2/((alpha-1)^2 (alpha-2)) = sd^2
    gives alpha = 2 + (mean/sd)^2 and beta = mean (alpha - 1).
    """
    if not (mean > 0.0) or not (sd > 0.0):
        raise DomainError(f"mean and sd must be positive, got {mean}, {sd}")
    alpha = 2.0 + (mean / sd) ** 2
    beta = mean * (alpha - 1.0)
    return alpha, beta


def center_columns(y_raw: np.ndarray) -> np.ndarray:
    """Subtract column means; every output column sums to zero."""
    y = np.asarray(y_raw, dtype=float)
    if y.ndim != 2 or y.shape[0] < 1:
        raise DomainError(f"expected an n x p matrix with n >= 1, got {y.shape}")
    return y - y.mean(axis=0, keepdims=True)


def default_hyper(y: np.ndarray, rho_mean: float, rho_sd: float) -> SvdHyper:
    """Weak shrinkage at the data's scale: nu=2, s2 = var(Y)/4, tau = ||Y||_F."""
    alpha, beta = invgamma_from_mean_sd(rho_mean, rho_sd)
    return SvdHyper(
        nu_err=2.0,
        s2=0.25 * float(np.var(y)),
        tau=float(np.linalg.norm(y)),
        alpha=alpha,
        beta=beta,
    )


class _RhoCache:
    """Synchronized per-rho factorization cache, keyed on the float bit pattern."""

    def __init__(self, build, maxsize=8):
        self._build = build
        self._maxsize = maxsize
        self._lock = threading.Lock()
        self._store = {}

    def get(self, rho: float):
        key = np.float64(rho).tobytes()
        with self._lock:
            if key in self._store:
                return self._store[key]
        value = self._build(rho)
        with self._lock:
            if len(self._store) >= self._maxsize:
                self._store.pop(next(iter(self._store)))
            self._store[key] = value
        return value


def _likelihood_terms(y, u, v, d, sigma2):
    """Gaussian likelihood value and gradients in (U, V, d, sigma2)."""
    n, p = y.shape
    resid = y - (u * d) @ v.T
    rss = float(np.sum(resid * resid))
    value = -0.5 * rss / sigma2 - 0.5 * n * p * (_LOG_2PI + np.log(sigma2))
    grad_u = (resid @ v) * d / sigma2
    grad_v = (resid.T @ u) * d / sigma2
    grad_d = np.einsum("ik,ik->k", u, resid @ v) / sigma2
    grad_sigma2 = 0.5 * rss / sigma2**2 - 0.5 * n * p / sigma2
    return value, grad_u, grad_v, grad_d, grad_sigma2


def _scale_priors(d, sigma2, rho, hyper):
    """Log priors for d (truncated normal), sigma^2, and rho, with gradients."""
    lp_d = float(np.sum(-0.5 * d**2 / hyper.tau**2))
    grad_d = -d / hyper.tau**2
    half_nu = 0.5 * hyper.nu_err
    lp_s = -(half_nu + 1.0) * np.log(sigma2) - half_nu * hyper.s2 / sigma2
    grad_s = -(half_nu + 1.0) / sigma2 + half_nu * hyper.s2 / sigma2**2
    lp_r = -(hyper.alpha + 1.0) * np.log(rho) - hyper.beta / rho
    grad_r = -(hyper.alpha + 1.0) / rho + hyper.beta / rho**2
    return lp_d + float(lp_s) + float(lp_r), grad_d, float(grad_s), float(grad_r)


def _svd_blocks(n, p, k, expansion_name):
    return [
        ParameterBlock("xu", (n, k)),
        ParameterBlock(expansion_name, (p, k)),
        ParameterBlock("d", (k,), Positive()),
        ParameterBlock("sigma2", (), Positive()),
        ParameterBlock("rho", (), Positive()),
    ]


def svd_model_logpost(
    y_centered: np.ndarray,
    k: int,
    hyper: SvdHyper,
    spacing: float = 1.0,
    initializer=None,
):
    """Posterior over (xu, xv, d, sigma2, rho) with the centered V expansion.

    The V expansion density is matrix normal with row covariance
    Omega(rho): -(k/2) logdet Omega - Tr(Omega^{-1} x_v x_v^T)/2, with the
    length-scale gradient assembled from trace identities and the analytic
    kernel derivative.  Omega is Cholesky-factored per distinct rho (small
    synchronized cache); if the factorization fails, a 1e-8 jitter is
    added once, then the failure is raised.
    """
    y = np.asarray(y_centered, dtype=float)
    n, p = y.shape
    if k < 1 or k > min(n, p):
        raise DomainError(f"need 1 <= k <= min(n, p), got k={k}")

    def build(rho):
        omega, domega = se_correlation_with_gradient(p, rho, spacing=spacing)
        try:
            c, low = cho_factor(omega, lower=True)
            jittered = False
        except np.linalg.LinAlgError:
            try:
                c, low = cho_factor(omega + _JITTER * np.eye(p), lower=True)
                jittered = True
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(
                    f"Omega(rho={rho}) is not positive definite even with jitter"
                ) from exc
        if jittered:
            omega = omega + _JITTER * np.eye(p)
        logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
        return omega, domega, (c, low), logdet

    cache = _RhoCache(build)

    def logp(values):
        xu, xv = values["xu"], values["xv"]
        d, sigma2, rho = values["d"], float(values["sigma2"]), float(values["rho"])
        u = polar_project(xu).q
        v = polar_project(xv).q
        value, grad_u, grad_v, grad_d, grad_s = _likelihood_terms(y, u, v, d, sigma2)

        # Uniform U: standard matrix-normal expansion density.
        value += -0.5 * float(np.sum(xu * xu)) - 0.5 * n * k * _LOG_2PI
        grad_xu = polar_pullback_grad(xu, grad_u) - xu

        omega, domega, chol, logdet = cache.get(rho)
        b = cho_solve(chol, xv)
        value += -0.5 * k * logdet - 0.5 * float(np.sum(xv * b)) - 0.5 * p * k * _LOG_2PI
        grad_xv = polar_pullback_grad(xv, grad_v) - b
        omega_inv = cho_solve(chol, np.eye(p))
        grad_rho = -0.5 * k * float(np.sum(omega_inv * domega))
        grad_rho += 0.5 * float(np.einsum("ij,ik,jk->", domega, b, b))

        lp_scales, gd, gs, gr = _scale_priors(d, sigma2, rho, hyper)
        value += lp_scales
        return value, {
            "xu": grad_xu,
            "xv": grad_xv,
            "d": grad_d + gd,
            "sigma2": np.asarray(grad_s + gs),
            "rho": np.asarray(grad_rho + gr),
        }

    return TransformedDensity(
        _svd_blocks(n, p, k, "xv"), logp, initializer=initializer
    ).build()


def svd_model_whitened(
    y_centered: np.ndarray,
    k: int,
    hyper: SvdHyper,
    spacing: float = 1.0,
    initializer=None,
):
    """Posterior with the whitened V expansion x_v = Omega(rho)^{1/2} w.

    w is standard matrix normal, so the smooth-kernel stiffness moves out
    of the target; the rho gradient runs through the derivative of the
    matrix square root (divided-difference table on the Omega eigenbasis).
    Same posterior on (U, D, V, sigma^2, rho) as the centered form.
    """
    y = np.asarray(y_centered, dtype=float)
    n, p = y.shape
    if k < 1 or k > min(n, p):
        raise DomainError(f"need 1 <= k <= min(n, p), got k={k}")

    def build(rho):
        omega, domega = se_correlation_with_gradient(p, rho, spacing=spacing)
        omega = omega + _JITTER * np.eye(p)
        w_eig, v_eig = np.linalg.eigh(omega)
        if w_eig[0] <= 0.0:
            raise NotPositiveDefinite(f"Omega(rho={rho}) lost definiteness")
        sq = np.sqrt(w_eig)
        root = (v_eig * sq) @ v_eig.T
        # Divided differences of sqrt on the eigenbasis; d root / d rho is
        # V (table o Et) V^T but only its contraction with (grad, w) is
        # ever needed, so keep the eigenbasis pieces.
        gap = w_eig[:, None] - w_eig[None, :]
        close = np.abs(gap) < 1e-12 * w_eig[-1]
        table = np.where(close, 0.0, sq[:, None] - sq[None, :]) / np.where(
            close, 1.0, gap
        )
        table[close] = (0.25 / sq[:, None] + 0.25 / sq[None, :])[close]
        et = v_eig.T @ domega @ v_eig
        return root, v_eig, table * et

    cache = _RhoCache(build)

    def logp(values):
        xu, w = values["xu"], values["w"]
        d, sigma2, rho = values["d"], float(values["sigma2"]), float(values["rho"])
        root, v_eig, droot_core = cache.get(rho)
        xv = root @ w

        u = polar_project(xu).q
        v = polar_project(xv).q
        value, grad_u, grad_v, grad_d, grad_s = _likelihood_terms(y, u, v, d, sigma2)

        value += -0.5 * float(np.sum(xu * xu)) - 0.5 * n * k * _LOG_2PI
        grad_xu = polar_pullback_grad(xu, grad_u) - xu

        grad_xv = polar_pullback_grad(xv, grad_v)
        value += -0.5 * float(np.sum(w * w)) - 0.5 * p * k * _LOG_2PI
        grad_w = root @ grad_xv - w
        # Tr(G^T droot w) with droot = V (core) V^T.
        grad_rho_lik = float(
            np.sum(droot_core * ((v_eig.T @ grad_xv) @ (v_eig.T @ w).T))
        )

        lp_scales, gd, gs, gr = _scale_priors(d, sigma2, rho, hyper)
        value += lp_scales
        return value, {
            "xu": grad_xu,
            "w": grad_w,
            "d": grad_d + gd,
            "sigma2": np.asarray(grad_s + gs),
            "rho": np.asarray(grad_rho_lik + gr),
        }

    model = TransformedDensity(
        _svd_blocks(n, p, k, "w"), logp, initializer=initializer
    ).build()
    model.v_root_cache = cache
    return model


def point_estimate_v(
    u_draws: np.ndarray, d_draws: np.ndarray, v_draws: np.ndarray, k: int
) -> np.ndarray:
    """First k right singular vectors of the posterior mean of U D V^T.

    Sign convention: the largest-magnitude entry of each column is made
    positive; exact ties resolve by index order (argmax).
    """
    if len(u_draws) == 0:
        raise EmptyChain("no posterior draws supplied")
    n, p = u_draws.shape[1], v_draws.shape[1]
    mean = np.zeros((n, p))
    for t in range(len(u_draws)):
        mean += (u_draws[t] * d_draws[t]) @ v_draws[t].T
    mean /= len(u_draws)
    _, _, vt = np.linalg.svd(mean, full_matrices=False)
    vest = vt[:k].T
    flips = np.sign(vest[np.argmax(np.abs(vest), axis=0), np.arange(k)])
    flips[flips == 0] = 1.0
    return vest * flips


def principal_angle(v1: np.ndarray, v2: np.ndarray) -> float:
    """Largest principal angle (degrees) between two column spans."""
    q1 = np.linalg.qr(v1)[0]
    q2 = np.linalg.qr(v2)[0]
    sv = np.linalg.svd(q1.T @ q2, compute_uv=False)
    return float(np.degrees(np.arccos(np.clip(sv[-1], -1.0, 1.0))))


def simulate_smooth_svd(
    n: int,
    p: int,
    k: int,
    rho: float,
    snr: float,
    rng: np.random.Generator,
    spacing: float = 1.0,
) -> tuple[np.ndarray, dict]:
    """Simulate Y = U D V^T + E with V built from smooth GP curves.

    V is the polar factor of a matrix of squared-exponential GP draws
    (length scale rho); U is uniform; D is set so that the entrywise
    signal-to-noise ratio sqrt(sum d_i^2 / (n p)) equals ``snr`` with
    unit noise.
    """
    omega, _ = se_correlation_with_gradient(p, rho, spacing=spacing)
    w_eig, v_eig = np.linalg.eigh(omega)
    root = (v_eig * np.sqrt(np.clip(w_eig, 0.0, None))) @ v_eig.T
    v = polar_project(root @ rng.standard_normal((p, k))).q
    u = polar_project(rng.standard_normal((n, k))).q
    weights = np.linspace(1.5, 1.0, k)
    weights = weights / np.sqrt(np.sum(weights**2))
    d = snr * np.sqrt(n * p) * weights
    y = (u * d) @ v.T + rng.standard_normal((n, p))
    return y, {"u": u, "d": d, "v": v, "rho": rho}


class SmoothSVD(BaseEstimator):
    """Bayesian model-based SVD estimator with smooth right singular vectors.

    ``fit`` centers the columns of Y, samples the posterior by HMC in the
    whitened parameterization, and stores per-draw factors; ``transform``
    projects (centered) data onto the estimated principal curves.
    """

    def __init__(
        self,
        k=4,
        spacing=1.0,
        rho_mean=None,
        rho_sd=None,
        nu_err=2.0,
        s2=None,
        tau=None,
        warmup=500,
        draws=500,
        chains=2,
        target_accept=0.8,
        seed=0,
        mass="diagonal",
        n_jobs=1,
    ):
        self.k = k
        self.spacing = spacing
        self.rho_mean = rho_mean
        self.rho_sd = rho_sd
        self.nu_err = nu_err
        self.s2 = s2
        self.tau = tau
        self.warmup = warmup
        self.draws = draws
        self.chains = chains
        self.target_accept = target_accept
        self.seed = seed
        self.mass = mass
        self.n_jobs = n_jobs

    def _resolve_hyper(self, y):
        p = y.shape[1]
        # Length-scale prior from the zero-crossing heuristic: a stationary
        # smooth process on [0, T] crosses zero about T/(pi rho) times, so
        # a prior mean of T/(2 pi) targets about two crossings.
        t_span = self.spacing * (p - 1)
        rho_mean = self.rho_mean if self.rho_mean is not None else t_span / (2 * np.pi)
        rho_sd = self.rho_sd if self.rho_sd is not None else 10.0
        alpha, beta = invgamma_from_mean_sd(rho_mean, rho_sd)
        return SvdHyper(
            nu_err=self.nu_err,
            s2=self.s2 if self.s2 is not None else 0.25 * float(np.var(y)),
            tau=self.tau if self.tau is not None else float(np.linalg.norm(y)),
            alpha=alpha,
            beta=beta,
        ), rho_mean

    def fit(self, y_raw, y=None):
        y_raw = np.asarray(y_raw, dtype=float)
        self.column_means_ = y_raw.mean(axis=0)
        yc = center_columns(y_raw)
        n, p = yc.shape
        hyper, rho_mean = self._resolve_hyper(yc)
        self.hyper_ = hyper

        u0, s0, vt0 = np.linalg.svd(yc, full_matrices=False)
        rank_k = (u0[:, : self.k] * s0[: self.k]) @ vt0[: self.k]
        resid_var = max(float(np.mean((yc - rank_k) ** 2)), 1e-6)
        k = self.k

        # Smooth-subspace least-norm preimage of the data V under the
        # whitening root at the prior-mean length scale.
        omega0, _ = se_correlation_with_gradient(p, rho_mean, spacing=self.spacing)
        w_eig, v_eig = np.linalg.eigh(omega0 + 1e-8 * np.eye(p))
        keep = w_eig > 1e-6 * w_eig[-1]
        coef = (v_eig[:, keep].T @ vt0[: self.k].T) / np.sqrt(w_eig[keep, None])
        w_target = v_eig[:, keep] @ coef
        w_target *= np.sqrt(p) / np.linalg.norm(w_target, axis=0, keepdims=True)

        def initializer(rng):
            # Data-informed start: top-k SVD factors with per-chain jitter;
            # expansion column radii match their priors (sqrt(n), sqrt(p)).
            d0 = s0[:k] * rng.uniform(0.95, 1.05, size=k)
            xu = np.sqrt(n) * u0[:, :k] + 0.1 * rng.standard_normal((n, k))
            w = w_target + 0.1 * rng.standard_normal((p, k))
            parts = [
                xu.ravel(),
                w.ravel(),
                np.log(d0),
                [np.log(resid_var * rng.uniform(0.9, 1.1))],
                [np.log(rho_mean * rng.uniform(0.9, 1.1))],
            ]
            return np.concatenate([np.asarray(q, dtype=float) for q in parts])

        self.model_ = svd_model_whitened(
            yc, k, hyper, spacing=self.spacing, initializer=initializer
        )
        if self.mass == "diagonal":
            from ..hmc import estimate_diagonal_inv_mass

            self.model_.inv_mass_hint = lambda u0: estimate_diagonal_inv_mass(
                self.model_, u0
            )
        config = HmcConfig(
            warmup=self.warmup,
            draws=self.draws,
            chains=self.chains,
            target_accept=self.target_accept,
            seed=self.seed,
            mass=self.mass,
        )
        self.chain_ = hmc_sample(self.model_, config, n_jobs=self.n_jobs)
        self._extract_factors(n, p)
        self.v_point_ = point_estimate_v(self.u_draws_, self.d_draws_, self.v_draws_, k)
        self.rho_draws_ = self.chain_.block("rho")[:, 0]
        return self

    def _extract_factors(self, n, p):
        k = self.k
        xu = self.chain_.block("xu")
        w = self.chain_.block("w")
        rho = self.chain_.block("rho")[:, 0]
        ndraws = len(rho)
        self.u_draws_ = np.empty((ndraws, n, k))
        self.v_draws_ = np.empty((ndraws, p, k))
        self.d_draws_ = self.chain_.block("d")
        for t in range(ndraws):
            root = self.model_.v_root_cache.get(float(rho[t]))[0]
            self.u_draws_[t] = polar_project(xu[t].reshape(n, k)).q
            self.v_draws_[t] = polar_project(root @ w[t].reshape(p, k)).q

    def transform(self, y_raw):
        """Scores of (column-centered) observations on the principal curves."""
        check_is_fitted(self, "v_point_")
        yc = np.asarray(y_raw, dtype=float) - self.column_means_
        return yc @ self.v_point_

    def fit_transform(self, y_raw, y=None):
        return self.fit(y_raw).transform(y_raw)
