from stainreg.register.affine import affine_register_gn
from stainreg.register.deformable import deformable_register_lbfgs, select_alpha
from stainreg.register.optim import OptimizationResult, OptimizerSettings, gauss_newton, lbfgs
from stainreg.register.pipeline import register_batch, register_pair
from stainreg.register.prealign import ara_prealign, template_match_rotational
from stainreg.register.rbf import rbf_deformable
from stainreg.register.results import PrealignResult, RegFlags, RegResult, StageResult
from stainreg.register.settings import RegConfig

__all__ = [
    "OptimizationResult",
    "OptimizerSettings",
    "PrealignResult",
    "RegConfig",
    "RegFlags",
    "RegResult",
    "StageResult",
    "affine_register_gn",
    "ara_prealign",
    "deformable_register_lbfgs",
    "gauss_newton",
    "lbfgs",
    "rbf_deformable",
    "register_batch",
    "register_pair",
    "select_alpha",
    "template_match_rotational",
]
