from .eigenmodel import (
    NetworkData,
    NetworkEigenmodel,
    auc,
    eigenmodel_logpost,
    eigenmodel_predict,
    simulate_network,
)
from .svd import (
    SmoothSVD,
    SvdHyper,
    center_columns,
    invgamma_from_mean_sd,
    point_estimate_v,
    simulate_smooth_svd,
    svd_model_logpost,
    svd_model_whitened,
)

__all__ = [
    "NetworkData",
    "NetworkEigenmodel",
    "auc",
    "eigenmodel_logpost",
    "eigenmodel_predict",
    "simulate_network",
    "SmoothSVD",
    "SvdHyper",
    "center_columns",
    "invgamma_from_mean_sd",
    "point_estimate_v",
    "simulate_smooth_svd",
    "svd_model_logpost",
    "svd_model_whitened",
]
