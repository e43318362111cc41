# src/stainreg/register/affine.py
import logging

from stainreg.raster.image import Image
from stainreg.raster.preprocess import build_pyramid
from stainreg.register.optim import Evaluation, gauss_newton
from stainreg.register.results import StageResult
from stainreg.register.settings import RegConfig
from stainreg.similarity.ngf import NGFObjective
from stainreg.transform.geometry import AffineTransform, CompositeTransform, rescale_transform

_log = logging.getLogger(__name__)

PYRAMID_MIN_DIM = 32


def affine_objective(objective: NGFObjective):
    def evaluate(params) -> Evaluation:
        state = objective.evaluate(AffineTransform.from_params(params))
        matrix, gradient = objective.gauss_newton_system(state)
        return Evaluation(state.value, gradient, matrix)

    return evaluate


def affine_register_gn(reference: Image, moving: Image, init: AffineTransform, cfg: RegConfig) -> StageResult:
    """
    Coarse-to-fine Gauss-Newton on the six affine parameters under NGF.

    Each level starts from the previous level's result carried through the
    pyramid frames; the reported flags and final value are the finest level's.
    """
    ref_pyramid = build_pyramid(reference, 2, PYRAMID_MIN_DIM)
    mov_pyramid = build_pyramid(moving, 2, PYRAMID_MIN_DIM)
    levels = min(cfg.affine_levels, len(ref_pyramid), len(mov_pyramid))
    settings = cfg.optimizer(cfg.max_iter_affine)
    similarity = cfg.similarity()

    stage = StageResult(CompositeTransform(init))
    affine = init
    for level in reversed(range(levels)):
        scale = ref_pyramid.scale(level)
        start = rescale_transform(CompositeTransform(affine), 1.0, scale).affine if level else affine
        objective = NGFObjective(ref_pyramid[level], mov_pyramid[level], similarity)
        result = gauss_newton(affine_objective(objective), start.params, settings)
        level_affine = AffineTransform.from_params(result.x)
        affine = rescale_transform(CompositeTransform(level_affine), scale, 1.0).affine if level else level_affine

        stage.traces[f"affine/L{level}"] = result.trace
        stage.final_value = result.value
        stage.converged = result.converged
        stage.max_iter_hit = result.max_iter_hit
        stage.damped |= result.damped
        _log.info(
            "Affine level %d (1/%d): %d iterations, NGF %.6g -> %.6g (%s)",
            level,
            scale,
            result.iterations,
            result.trace[0],
            result.value,
            result.stop_reason,
        )

    stage.overlap = objective.evaluate(affine).overlap
    stage.transform = CompositeTransform(affine)
    return stage
