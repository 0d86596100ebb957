"""Priors on semi-orthogonal matrices built by polar projection.

A p x k latent matrix X = Omega^{1/2} Z is drawn with i.i.d. entries in Z
(standard normal, or the sparsity-inducing shrinkage law) and row
correlation Omega; the prior on the Stiefel manifold is the law of the
polar factor Q_X.  With normal entries this is the matrix angular central
Gaussian MACG(Omega), uniform when Omega = I.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .correlation import CorrelationMatrix, correlation_matrix
from .exceptions import DomainError, NotPositiveDefinite
from .shrinkage import ShrinkageLaw, shrinkage_sample
from .stiefel import polar_project

ENTRY_LAWS = ("standard_normal", "shrinkage")


@dataclass(frozen=True)
class StructuredPriorSpec:
    """Declarative description of the law of X = Omega^{1/2} Z."""

    p: int
    k: int
    entry_law: str = "standard_normal"
    ell: Optional[float] = None
    omega: Optional[CorrelationMatrix] = None

    def __post_init__(self):
        if self.k < 1 or self.p < self.k:
            raise DomainError(f"need p >= k >= 1, got p={self.p}, k={self.k}")
        if self.entry_law not in ENTRY_LAWS:
            raise DomainError(
                f"entry_law must be one of {ENTRY_LAWS}, got {self.entry_law!r}"
            )
        if self.entry_law == "shrinkage":
            ShrinkageLaw(self.ell if self.ell is not None else -1.0)
            if self.omega is not None and self.omega.family != "identity":
                raise DomainError(
                    "shrinkage entries require an identity correlation matrix"
                )
        if self.omega is not None and self.omega.p != self.p:
            raise DomainError(
                f"omega is {self.omega.p} x {self.omega.p} but p = {self.p}"
            )

    def resolved_omega(self) -> CorrelationMatrix:
        if self.omega is None:
            return correlation_matrix("identity", self.p)
        return self.omega


def _sample_z(spec: StructuredPriorSpec, rng: np.random.Generator, size: int):
    n = size * spec.p * spec.k
    if spec.entry_law == "standard_normal":
        z = rng.standard_normal(n)
    else:
        z = shrinkage_sample(n, ShrinkageLaw(spec.ell), rng)
    return z.reshape(size, spec.p, spec.k)


def sample_matrix_x(
    spec: StructuredPriorSpec, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """Draw the latent matrix X = Omega^{1/2} Z.

    Returns a (p, k) array, or (size, p, k) when ``size`` is given.  The
    square root of Omega is computed once and cached on the matrix.
    """
    nrep = 1 if size is None else int(size)
    if nrep < 1:
        raise DomainError(f"size must be >= 1, got {size}")
    z = _sample_z(spec, rng, nrep)
    omega = spec.resolved_omega()
    if omega.family != "identity":
        root = omega.sqrt()
        x = np.einsum("ij,njk->nik", root, z)
    else:
        x = z
    return x[0] if size is None else x


def sample_prior_q(
    spec: StructuredPriorSpec, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """Draw Q_X, the polar projection of X onto the Stiefel manifold."""
    x = sample_matrix_x(spec, rng, size=size)
    if size is None:
        return polar_project(x).q
    if spec.k == 1:
        # k = 1 reduces to column normalization; vectorized over draws.
        norms = np.linalg.norm(x, axis=(1, 2), keepdims=True)
        return x / norms
    return np.stack([polar_project(xi).q for xi in x])


def macg_logpdf(q: np.ndarray, sigma: np.ndarray) -> float:
    """Log density of MACG(sigma) at q, relative to the uniform measure.

    f(Q | Sigma) = |Sigma|^{-k/2} |Q^T Sigma^{-1} Q|^{-p/2}; identically
    zero on the log scale when Sigma = I.
    """
    q = np.asarray(q, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p, k = q.shape
    if sigma.shape != (p, p):
        raise DomainError(f"sigma must be {p} x {p}, got {sigma.shape}")
    try:
        c, low = cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("sigma is not positive definite") from exc
    logdet_sigma = 2.0 * np.sum(np.log(np.diag(c)))
    inner = q.T @ cho_solve((c, low), q)
    sign, logdet_inner = np.linalg.slogdet(inner)
    if sign <= 0:
        raise NotPositiveDefinite("Q^T Sigma^{-1} Q is not positive definite")
    return -0.5 * k * logdet_sigma - 0.5 * p * logdet_inner
