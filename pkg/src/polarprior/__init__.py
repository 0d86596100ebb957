"""Structured prior distributions for semi-orthogonal matrices.

Priors on the Stiefel manifold are built by pushing an unconstrained
random matrix X = Omega^{1/2} Z through the polar projection; posterior
inference runs Hamiltonian Monte Carlo on the unconstrained expansion.
"""

__version__ = "0.1.0"

from .correlation import CorrelationMatrix, bessel_k, correlation_matrix, matern_corr
from .diagnostics import diagnostics, ess, split_rhat
from .hmc import (
    ChainOutput,
    HmcConfig,
    hmc_sample,
    leapfrog,
    polar_expand,
)
from .priors import StructuredPriorSpec, macg_logpdf, sample_matrix_x, sample_prior_q
from .shrinkage import (
    ShrinkageLaw,
    scale_mixture_sample,
    shrinkage_logpdf,
    shrinkage_sample,
)
from .stiefel import (
    PolarFactors,
    frechet_inv_sqrt,
    frechet_sqrt,
    inv_sqrt_spd,
    polar_project,
    polar_pullback_grad,
    sqrt_spd,
)
from .theory import (
    WassersteinReport,
    coupled_frobenius_identity,
    count_zero_crossings,
    invariance_check,
    operator_norm_ratio,
    renormalized_covariance,
    semicircle_distance,
    w2_1d,
    wasserstein_experiment,
)
from .transforms import (
    Constraint,
    Interval,
    ModelPosterior,
    ParameterBlock,
    Positive,
    to_constrained,
    to_unconstrained,
)

__all__ = [
    "CorrelationMatrix",
    "bessel_k",
    "correlation_matrix",
    "matern_corr",
    "diagnostics",
    "ess",
    "split_rhat",
    "ChainOutput",
    "HmcConfig",
    "hmc_sample",
    "leapfrog",
    "polar_expand",
    "StructuredPriorSpec",
    "macg_logpdf",
    "sample_matrix_x",
    "sample_prior_q",
    "ShrinkageLaw",
    "scale_mixture_sample",
    "shrinkage_logpdf",
    "shrinkage_sample",
    "PolarFactors",
    "frechet_inv_sqrt",
    "frechet_sqrt",
    "inv_sqrt_spd",
    "polar_project",
    "polar_pullback_grad",
    "sqrt_spd",
    "WassersteinReport",
    "coupled_frobenius_identity",
    "count_zero_crossings",
    "invariance_check",
    "operator_norm_ratio",
    "renormalized_covariance",
    "semicircle_distance",
    "w2_1d",
    "wasserstein_experiment",
    "Constraint",
    "Interval",
    "ModelPosterior",
    "ParameterBlock",
    "Positive",
    "to_constrained",
    "to_unconstrained",
]
