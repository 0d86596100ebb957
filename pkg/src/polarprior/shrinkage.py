"""Sparsity-inducing entry distribution for the latent matrix.

The law has density

    f(z | ell) = (ell/2)^(ell/2) / Gamma(ell/2) * |z|^(ell-1) * exp(-ell z^2 / 2)

for ell in (0, 1].  At ell = 1 it is the standard normal; for ell < 1 it
spikes at zero while keeping mean zero, unit variance, and fourth moment
1 + 2/ell.  Two samplers are provided: the direct route through the
Gamma law of the squared values, and the normal scale-mixture route with
a Beta-distributed local scale (the parameterization used for posterior
inference, where the spike is never evaluated directly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import DomainError


@dataclass(frozen=True)
class ShrinkageLaw:
    """Entry distribution indexed by the sparsity parameter ``ell`` in (0, 1]."""

    ell: float

    def __post_init__(self):
        if not (0.0 < self.ell <= 1.0):
            raise DomainError(f"ell must lie in (0, 1], got {self.ell}")


def shrinkage_logpdf(z, law: ShrinkageLaw):
    """Log density of the shrinkage law; unbounded at z = 0 when ell < 1."""
    ell = law.ell
    z = np.asarray(z, dtype=float)
    if ell < 1.0 and np.any(z == 0.0):
        raise DomainError("density is unbounded at z = 0 for ell < 1")
    const = 0.5 * ell * np.log(0.5 * ell) - gammaln(0.5 * ell)
    if ell == 1.0:
        out = const - 0.5 * z**2
    else:
        with np.errstate(divide="ignore"):
            out = const + (ell - 1.0) * np.log(np.abs(z)) - 0.5 * ell * z**2
    return out if out.ndim else float(out)


def shrinkage_sample(n: int, law: ShrinkageLaw, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. values: |z|^2 ~ Gamma(ell/2, scale 2/ell) with a fair sign."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    ell = law.ell
    g = rng.gamma(shape=0.5 * ell, scale=2.0 / ell, size=n)
    sign = rng.integers(0, 2, size=n) * 2.0 - 1.0
    return sign * np.sqrt(g)


def scale_mixture_sample(
    n: int, law: ShrinkageLaw, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (z, theta) pairs from the normal scale-mixture representation.

    theta ~ Beta(ell/2, (1-ell)/2) and z | theta ~ Normal(0, theta/ell);
    the z marginal is the shrinkage law.  Only defined for ell in (0, 1):
    at ell = 1 the Beta component degenerates.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    ell = law.ell
    if not (0.0 < ell < 1.0):
        raise DomainError(f"scale mixture requires ell in (0, 1), got {ell}")
    theta = rng.beta(0.5 * ell, 0.5 * (1.0 - ell), size=n)
    z = rng.standard_normal(n) * np.sqrt(theta / ell)
    return z, theta
