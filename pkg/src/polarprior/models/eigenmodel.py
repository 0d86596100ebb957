"""Bernoulli-probit network eigenmodel with a sparse eigenvector prior.

Dyads of a symmetric binary adjacency matrix are modeled as independent
Bernoulli(pi_ij) with pi_ij = Phi[c + (Q Lambda Q^T)_ij], Q a p x k
semi-orthogonal matrix of eigenvectors, Lambda diagonal, and c a real
intercept.  Q is parameterized by an unconstrained expansion matrix Z
through the polar projection; the entries of Z carry the sparsity law in
its normal scale-mixture form, with local scales theta in (0, 1) and a
global sparsity level ell learned from the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, log_ndtr, ndtr
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import (
    DomainError,
    EmptyChain,
    NoObservedDyads,
    SingleClass,
)
from ..hmc import ChainOutput, HmcConfig, hmc_sample
from ..priors import StructuredPriorSpec, sample_prior_q
from ..stiefel import polar_project, polar_pullback_grad
from ..transforms import Interval, ParameterBlock, TransformedDensity

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# ell stays strictly inside (0, 1) on the logit scale so the Beta terms
# remain proper numerically.
ELL_BOUNDS = (0.001, 0.999)


@dataclass(frozen=True)
class NetworkData:
    """Symmetric binary adjacency with NaN marking unobserved dyads."""

    adjacency: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.adjacency, dtype=float)
        if y.ndim != 2 or y.shape[0] != y.shape[1]:
            raise DomainError(f"adjacency must be square, got {y.shape}")
        observed = ~np.isnan(y)
        vals = y[observed]
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise DomainError("observed adjacency entries must be 0 or 1")
        both = observed & observed.T
        if not np.array_equal(
            y[both & ~np.eye(len(y), dtype=bool)],
            y.T[both & ~np.eye(len(y), dtype=bool)],
        ):
            raise DomainError("adjacency disagrees on a mutually observed dyad")
        object.__setattr__(self, "adjacency", y)

    @property
    def p(self) -> int:
        return self.adjacency.shape[0]

    def observed_dyads(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index arrays (i, j) with i < j and the dyad values y_ij.

        A dyad counts as observed if either triangle holds a value.
        """
        y = self.adjacency
        iu, ju = np.triu_indices(self.p, k=1)
        upper = y[iu, ju]
        lower = y[ju, iu]
        vals = np.where(np.isnan(upper), lower, upper)
        keep = ~np.isnan(vals)
        if not np.any(keep):
            raise NoObservedDyads("no observed dyads in the adjacency matrix")
        return iu[keep], ju[keep], vals[keep]


def simulate_network(
    p: int,
    k: int,
    c: float,
    lam: np.ndarray,
    rng: np.random.Generator,
    ell: float = 0.2,
) -> tuple[NetworkData, dict]:
    """Simulate an adjacency from the model with Q drawn from the sparse prior.

    Returns the data and the generating parameters (c, lam, q, probs).
    """
    spec = StructuredPriorSpec(p=p, k=k, entry_law="shrinkage", ell=ell)
    q = sample_prior_q(spec, rng)
    eta = c + q @ np.diag(lam) @ q.T
    probs = ndtr(eta)
    u = rng.random((p, p))
    y = (np.triu(u, 1) + np.triu(u, 1).T < probs).astype(float)
    np.fill_diagonal(y, np.nan)
    return NetworkData(y), {"c": c, "lam": np.asarray(lam), "q": q, "probs": probs}


def _probit_terms(eta: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Log likelihood and d/d eta for Bernoulli-probit observations."""
    log_phi = -0.5 * eta**2 - _LOG_SQRT_2PI
    ll = np.where(y == 1.0, log_ndtr(eta), log_ndtr(-eta))
    w = np.where(
        y == 1.0,
        np.exp(log_phi - log_ndtr(eta)),
        -np.exp(log_phi - log_ndtr(-eta)),
    )
    return float(ll.sum()), w


def eigenmodel_logpost(data: NetworkData, k: int, ell_bounds=ELL_BOUNDS):
    """Build the posterior density over (c, lam, z, theta, ell).

    The likelihood sums only observed dyads i < j.  Priors: Normal(c|0,10^2),
    Normal(lam_j|0, p), the scale-mixture pair Normal(z|0, theta/ell) *
    Beta(theta|ell/2, (1-ell)/2), and a flat prior for ell on (0, 1); all
    transform Jacobians are added by the wrapper.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    p = data.p
    rows, cols, yvals = data.observed_dyads()

    blocks = [
        ParameterBlock("c", ()),
        ParameterBlock("lam", (k,)),
        ParameterBlock("z", (p, k)),
        ParameterBlock("theta", (p, k), Interval(0.0, 1.0)),
        ParameterBlock("ell", (), Interval(*ell_bounds)),
    ]

    def logp(values):
        c = float(values["c"])
        lam = values["lam"]
        z = values["z"]
        theta = values["theta"]
        ell = float(values["ell"])

        q = polar_project(z).q
        qlam = q * lam  # Q Lambda with Lambda diagonal
        eta = c + np.einsum("ik,jk->ij", qlam, q)[rows, cols]
        loglik, w = _probit_terms(eta, yvals)

        wmat = np.zeros((p, p))
        wmat[rows, cols] = w
        wmat = wmat + wmat.T
        grad_q = wmat @ qlam
        grad_lam_lik = 0.5 * np.einsum("ik,ij,jk->k", q, wmat, q)
        grad_c_lik = w.sum()
        grad_z_lik = polar_pullback_grad(z, grad_q)

        # Normal(z | 0, theta/ell)
        lp_z = np.sum(
            -_LOG_SQRT_2PI - 0.5 * (np.log(theta) - np.log(ell)) - 0.5 * ell * z**2 / theta
        )
        dz = -ell * z / theta
        dtheta_z = -0.5 / theta + 0.5 * ell * z**2 / theta**2
        dell_z = np.sum(0.5 / ell - 0.5 * z**2 / theta)

        # Beta(theta | ell/2, (1-ell)/2)
        a, b = 0.5 * ell, 0.5 * (1.0 - ell)
        log_b = gammaln(a) + gammaln(b) - gammaln(0.5)
        lp_theta = np.sum((a - 1.0) * np.log(theta) + (b - 1.0) * np.log1p(-theta))
        lp_theta -= theta.size * log_b
        dtheta_beta = (a - 1.0) / theta - (b - 1.0) / (1.0 - theta)
        dell_beta = 0.5 * np.sum(np.log(theta) - np.log1p(-theta))
        dell_beta -= theta.size * 0.5 * (digamma(a) - digamma(b))

        # Normal(c | 0, 100), Normal(lam_j | 0, p), flat ell
        lp_c = -0.5 * c**2 / 100.0 - _LOG_SQRT_2PI - 0.5 * np.log(100.0)
        lp_lam = np.sum(-0.5 * lam**2 / p - _LOG_SQRT_2PI - 0.5 * np.log(p))

        value = loglik + lp_z + lp_theta + lp_c + lp_lam
        grads = {
            "c": np.asarray(grad_c_lik - c / 100.0),
            "lam": grad_lam_lik - lam / p,
            "z": grad_z_lik + dz,
            "theta": dtheta_z + dtheta_beta,
            "ell": np.asarray(dell_z + dell_beta),
        }
        return value, grads

    return TransformedDensity(blocks, logp).build()


def eigenmodel_whitened(data: NetworkData, k: int, ell_bounds=ELL_BOUNDS):
    """Non-centered variant for sampling: z = sqrt(theta/ell) * z_raw.

    Same posterior over (c, lam, z, theta, ell) as
    :func:`eigenmodel_logpost`; stating the local scales multiplicatively
    removes the scale-mixture funnel that defeats a single-stepsize
    sampler.  Draws are reported as z_raw; rescale with theta and ell to
    recover z.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    p = data.p
    rows, cols, yvals = data.observed_dyads()

    blocks = [
        ParameterBlock("c", ()),
        ParameterBlock("lam", (k,)),
        ParameterBlock("z_raw", (p, k)),
        ParameterBlock("theta", (p, k), Interval(0.0, 1.0)),
        ParameterBlock("ell", (), Interval(*ell_bounds)),
    ]

    def logp(values):
        c = float(values["c"])
        lam = values["lam"]
        z_raw = values["z_raw"]
        theta = values["theta"]
        ell = float(values["ell"])

        scale = np.sqrt(theta / ell)
        z = scale * z_raw
        q = polar_project(z).q
        qlam = q * lam
        eta = c + np.einsum("ik,jk->ij", qlam, q)[rows, cols]
        loglik, w = _probit_terms(eta, yvals)

        wmat = np.zeros((p, p))
        wmat[rows, cols] = w
        wmat = wmat + wmat.T
        grad_q = wmat @ qlam
        grad_lam_lik = 0.5 * np.einsum("ik,ij,jk->k", q, wmat, q)
        grad_z = polar_pullback_grad(z, grad_q)

        lp_raw = np.sum(-0.5 * z_raw**2 - _LOG_SQRT_2PI)

        a, b = 0.5 * ell, 0.5 * (1.0 - ell)
        log_b = gammaln(a) + gammaln(b) - gammaln(0.5)
        lp_theta = np.sum((a - 1.0) * np.log(theta) + (b - 1.0) * np.log1p(-theta))
        lp_theta -= theta.size * log_b
        dtheta = (a - 1.0) / theta - (b - 1.0) / (1.0 - theta)
        dtheta += grad_z * z_raw * 0.5 / np.sqrt(theta * ell)
        dell = 0.5 * np.sum(np.log(theta) - np.log1p(-theta))
        dell -= theta.size * 0.5 * (digamma(a) - digamma(b))
        dell += np.sum(grad_z * z) * (-0.5 / ell)

        lp_c = -0.5 * c**2 / 100.0 - _LOG_SQRT_2PI - 0.5 * np.log(100.0)
        lp_lam = np.sum(-0.5 * lam**2 / p - _LOG_SQRT_2PI - 0.5 * np.log(p))

        value = loglik + lp_raw + lp_theta + lp_c + lp_lam
        grads = {
            "c": np.asarray(w.sum() - c / 100.0),
            "lam": grad_lam_lik - lam / p,
            "z_raw": grad_z * scale - z_raw,
            "theta": dtheta,
            "ell": np.asarray(dell),
        }
        return value, grads

    return TransformedDensity(blocks, logp).build()


def eigenmodel_z_draws(chain: ChainOutput, p: int, k: int) -> np.ndarray:
    """Reconstruct z draws (flattened) from a whitened-parameterization chain."""
    z_raw = chain.block("z_raw")
    theta = chain.block("theta")
    ell = chain.block("ell")[:, 0]
    return z_raw * np.sqrt(theta / ell[:, None])


def eigenmodel_uniform(data: NetworkData, k: int):
    """Standard eigenmodel: uniform prior on Q via a plain normal expansion.

    Same likelihood and (c, lam) priors as the sparse variant, with the
    eigenvector expansion z carrying independent standard normal entries,
    so Q is uniform on the Stiefel manifold.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    p = data.p
    rows, cols, yvals = data.observed_dyads()

    blocks = [
        ParameterBlock("c", ()),
        ParameterBlock("lam", (k,)),
        ParameterBlock("z", (p, k)),
    ]

    def logp(values):
        c = float(values["c"])
        lam = values["lam"]
        z = values["z"]
        q = polar_project(z).q
        qlam = q * lam
        eta = c + np.einsum("ik,jk->ij", qlam, q)[rows, cols]
        loglik, w = _probit_terms(eta, yvals)
        wmat = np.zeros((p, p))
        wmat[rows, cols] = w
        wmat = wmat + wmat.T
        grad_z = polar_pullback_grad(z, wmat @ qlam)
        value = (
            loglik
            + np.sum(-0.5 * z**2 - _LOG_SQRT_2PI)
            - 0.5 * c**2 / 100.0
            - _LOG_SQRT_2PI
            - 0.5 * np.log(100.0)
            + np.sum(-0.5 * lam**2 / p - _LOG_SQRT_2PI - 0.5 * np.log(p))
        )
        grads = {
            "c": np.asarray(w.sum() - c / 100.0),
            "lam": 0.5 * np.einsum("ik,ij,jk->k", q, wmat, q) - lam / p,
            "z": grad_z - z,
        }
        return value, grads

    return TransformedDensity(blocks, logp).build()


def _chain_z_draws(chain: ChainOutput, p: int, k: int) -> np.ndarray:
    """Flat z draws from either the centered or the whitened chain."""
    if any(n == "z" or n.startswith("z.") for n in chain.names):
        return chain.block("z")
    return eigenmodel_z_draws(chain, p, k)


def eigenmodel_predict(
    chain: ChainOutput, dyads: tuple[np.ndarray, np.ndarray], p: int, k: int
) -> np.ndarray:
    """Posterior mean of Phi[c + (Q Lambda Q^T)_ij] for the given dyads."""
    if chain.draws.shape[0] == 0:
        raise EmptyChain("chain contains no draws")
    rows, cols = np.asarray(dyads[0]), np.asarray(dyads[1])
    c_draws = chain.block("c")[:, 0]
    lam_draws = chain.block("lam")
    z_draws = _chain_z_draws(chain, p, k)
    total = np.zeros(len(rows))
    ndraws = len(c_draws)
    for t in range(ndraws):
        q = polar_project(z_draws[t].reshape(p, k)).q
        qlam = q * lam_draws[t]
        eta = c_draws[t] + np.einsum("ik,jk->ij", qlam, q)[rows, cols]
        total += ndtr(eta)
    return total / ndraws


def eigenmodel_qlamqt_draws(chain: ChainOutput, p: int, k: int) -> np.ndarray:
    """Per-draw low-rank matrices Q Lambda Q^T, shape (draws, p, p)."""
    lam_draws = chain.block("lam")
    z_draws = _chain_z_draws(chain, p, k)
    out = np.empty((len(lam_draws), p, p))
    for t in range(len(lam_draws)):
        q = polar_project(z_draws[t].reshape(p, k)).q
        out[t] = (q * lam_draws[t]) @ q.T
    return out


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with tie correction via midranks."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise DomainError("scores and labels must have equal length")
    npos = int(np.sum(labels == 1))
    nneg = int(np.sum(labels == 0))
    if npos == 0 or nneg == 0:
        raise SingleClass("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    u_stat = rank_sum - 0.5 * npos * (npos + 1)
    return float(u_stat / (npos * nneg))


def _spectral_initializer(data: NetworkData, k: int, model):
    """Probit-spectral warm start for the whitened eigenmodel.

    Smooths the adjacency toward the density, maps through the probit
    quantile, and eigendecomposes the centered matrix; the top-|k|
    eigenpairs seed (lam, z_raw) and the density seeds c.
    """
    from scipy.special import ndtri

    y = data.adjacency
    rows, cols, vals = data.observed_dyads()
    dens = float(np.clip(np.mean(vals), 0.05, 0.95))
    filled = np.full(y.shape, dens)
    filled[rows, cols] = 0.25 * dens + 0.75 * vals
    filled[cols, rows] = filled[rows, cols]
    eta = ndtri(np.clip(filled, 0.02, 0.98))
    c0 = float(ndtri(dens))
    np.fill_diagonal(eta, c0)
    w_eig, v_eig = np.linalg.eigh(eta - c0)
    order = np.argsort(np.abs(w_eig))[::-1][:k]
    lam0 = w_eig[order]
    q0 = v_eig[:, order]
    p = data.p

    has_scales = any(b.name == "z_raw" for b in model.blocks)

    def initializer(rng):
        jitter = 1.0 + 0.1 * rng.standard_normal()
        values = {
            "c": np.asarray(c0 + 0.1 * rng.standard_normal()),
            "lam": lam0 * jitter,
        }
        direction = q0 * np.sqrt(p) + 0.2 * rng.standard_normal((p, k))
        if has_scales:
            # z = sqrt(theta/ell) z_raw reproduces ~q0 at theta=1/4, ell=1/2.
            values["z_raw"] = np.sqrt(2.0) * direction
            values["theta"] = np.full((p, k), 0.25)
            values["ell"] = np.asarray(0.5)
        else:
            values["z"] = direction
        return model.unconstrain(values)

    return initializer


class NetworkEigenmodel(BaseEstimator):
    """Sparse network eigenmodel estimator with an HMC backend.

    Parameters mirror the sampler configuration; ``fit`` expects a square
    adjacency array (NaN = unobserved dyad) and exposes posterior
    summaries, predicted connection probabilities, and the elementwise
    posterior median of Q Lambda Q^T.
    """

    def __init__(
        self,
        k=2,
        prior="sparse",
        warmup=500,
        draws=500,
        chains=2,
        target_accept=0.8,
        seed=0,
        mass="unit",
        n_jobs=1,
    ):
        self.k = k
        self.prior = prior
        self.warmup = warmup
        self.draws = draws
        self.chains = chains
        self.target_accept = target_accept
        self.seed = seed
        self.mass = mass
        self.n_jobs = n_jobs

    def fit(self, adjacency, y=None):
        data = adjacency if isinstance(adjacency, NetworkData) else NetworkData(
            np.asarray(adjacency, dtype=float)
        )
        if self.prior not in ("sparse", "uniform"):
            raise DomainError(f"prior must be 'sparse' or 'uniform', got {self.prior!r}")
        self.p_ = data.p
        if self.prior == "sparse":
            self.model_ = eigenmodel_whitened(data, self.k)
        else:
            self.model_ = eigenmodel_uniform(data, self.k)
        self.model_.initializer = _spectral_initializer(data, self.k, self.model_)
        config = HmcConfig(
            warmup=self.warmup,
            draws=self.draws,
            chains=self.chains,
            target_accept=self.target_accept,
            seed=self.seed,
            mass=self.mass,
        )
        self.chain_ = hmc_sample(self.model_, config, n_jobs=self.n_jobs)
        self.ell_draws_ = (
            self.chain_.block("ell")[:, 0] if self.prior == "sparse" else None
        )
        return self

    def predict_proba(self, dyads=None):
        """Posterior mean connection probabilities for dyads (default: all i < j)."""
        check_is_fitted(self, "chain_")
        if dyads is None:
            dyads = np.triu_indices(self.p_, k=1)
        return eigenmodel_predict(self.chain_, dyads, self.p_, self.k)

    def point_estimate(self):
        """Elementwise posterior median of Q Lambda Q^T."""
        check_is_fitted(self, "chain_")
        mats = eigenmodel_qlamqt_draws(self.chain_, self.p_, self.k)
        return np.median(mats, axis=0)

    def ell_interval(self, level=0.9):
        """Equal-tailed credible interval for the sparsity parameter."""
        check_is_fitted(self, "chain_")
        if self.ell_draws_ is None:
            raise DomainError("the uniform-prior model has no sparsity parameter")
        alpha = 0.5 * (1.0 - level)
        lo, hi = np.quantile(self.ell_draws_, [alpha, 1.0 - alpha])
        return float(lo), float(hi)
