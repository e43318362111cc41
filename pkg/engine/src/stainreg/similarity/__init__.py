from stainreg.similarity.measures import (
    Correlation,
    ScoreMap,
    SimilarityConfig,
    conv_score_map,
    local_ncc,
    mse,
    ncc,
    ncc_score_map,
)
from stainreg.similarity.ngf import NGFObjective, NGFState, ngf_distance, ngf_gradient, ngf_residuals
from stainreg.similarity.regularizers import Regularization, curv, diffusive, grid_laplacian

__all__ = [
    "Correlation",
    "NGFObjective",
    "NGFState",
    "Regularization",
    "ScoreMap",
    "SimilarityConfig",
    "conv_score_map",
    "curv",
    "diffusive",
    "grid_laplacian",
    "local_ncc",
    "mse",
    "ncc",
    "ncc_score_map",
    "ngf_distance",
    "ngf_gradient",
    "ngf_residuals",
]
