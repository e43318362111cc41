# src/stainreg/register/deformable.py
import logging
from collections.abc import Sequence

import numpy as np

from stainreg.errors import ArgumentError
from stainreg.raster.image import Image
from stainreg.raster.preprocess import build_pyramid
from stainreg.register.optim import Evaluation, lbfgs
from stainreg.register.results import StageResult
from stainreg.register.settings import RegConfig
from stainreg.similarity.measures import local_ncc
from stainreg.similarity.ngf import NGFObjective
from stainreg.similarity.regularizers import Regularization, curv, diffusive
from stainreg.transform.geometry import (
    AffineTransform,
    CompositeTransform,
    DisplacementGrid,
    grid_interpolate,
    rescale_transform,
    warp_image,
)

_log = logging.getLogger(__name__)

PYRAMID_MIN_DIM = 32


def _regularizer(name: str):
    match name:
        case "curvature":
            return curv
        case "diffusive":
            return diffusive
        case _:
            raise ArgumentError(f"Unknown regularizer '{name}'")


def prolong_grid(
    grid: DisplacementGrid, scale_from: float, scale_to: float, width: int, height: int, spacing: float
) -> DisplacementGrid:
    """
    Resamples a level grid onto a covering grid of the finer level.

    Displacements are carried through the pyramid frames (so pixel units scale)
    and bilinearly interpolated at the new nodes, clamped into the old support.
    """
    carried = rescale_transform(CompositeTransform(AffineTransform(), grid), scale_from, scale_to).deform
    assert carried is not None
    target = DisplacementGrid.covering(width, height, spacing)
    xs, ys = target.node_positions()
    x_max = carried.origin[0] + carried.h * (carried.gw - 1)
    y_max = carried.origin[1] + carried.h * (carried.gh - 1)
    nx, ny = np.meshgrid(np.clip(xs, carried.origin[0], x_max), np.clip(ys, carried.origin[1], y_max))
    values = grid_interpolate(carried, np.stack([nx.ravel(), ny.ravel()], axis=1))
    return target.with_flat(np.concatenate([values[:, 0], values[:, 1]]))


def deformable_objective(
    objective: NGFObjective, affine: AffineTransform, grid: DisplacementGrid, alpha: float, regularize
):
    """J(u) = NGF(R, T, y) + alpha * reg(u) over the flat grid displacements."""

    def evaluate(u: np.ndarray) -> Evaluation:
        current = grid.with_flat(u)
        state = objective.evaluate(CompositeTransform(affine, current))
        penalty: Regularization = regularize(current)
        value = state.value + alpha * penalty.value
        return Evaluation(value, objective.grid_gradient(state, current) + alpha * penalty.gradient)

    return evaluate


def deformable_register_lbfgs(
    reference: Image, moving: Image, init: AffineTransform, cfg: RegConfig, alpha: float | None = None
) -> StageResult:
    """
    Multilevel control-grid registration minimizing NGF + alpha * regularizer with L-BFGS.

    The affine part stays fixed at `init`; the grid (spacing `grid_h` level
    pixels) starts at zero on the coarsest level and is prolonged level by level.
    """
    alpha = cfg.alpha if alpha is None else alpha
    if alpha < 0:
        raise ArgumentError(f"alpha must be >= 0, got {alpha}")
    regularize = _regularizer(cfg.regularizer)
    ref_pyramid = build_pyramid(reference, 2, PYRAMID_MIN_DIM)
    mov_pyramid = build_pyramid(moving, 2, PYRAMID_MIN_DIM)
    levels = min(cfg.deform_levels, len(ref_pyramid), len(mov_pyramid))
    settings = cfg.optimizer(cfg.max_iter_deform)
    similarity = cfg.similarity()

    stage = StageResult(CompositeTransform(init))
    grid: DisplacementGrid | None = None
    previous_scale = 1.0
    for level in reversed(range(levels)):
        scale = ref_pyramid.scale(level)
        ref_level, mov_level = ref_pyramid[level], mov_pyramid[level]
        affine = rescale_transform(CompositeTransform(init), 1.0, scale).affine if level else init
        if grid is None:
            grid = DisplacementGrid.covering(ref_level.width, ref_level.height, cfg.grid_h)
        else:
            grid = prolong_grid(grid, previous_scale, scale, ref_level.width, ref_level.height, cfg.grid_h)

        objective = NGFObjective(ref_level, mov_level, similarity)
        result = lbfgs(deformable_objective(objective, affine, grid, alpha, regularize), grid.flat(), settings)
        grid = grid.with_flat(result.x)
        previous_scale = scale

        state = objective.evaluate(CompositeTransform(affine, grid))
        stage.traces[f"deformable/L{level}"] = result.trace
        stage.final_value = state.value
        stage.overlap = state.overlap
        stage.converged = result.converged
        stage.max_iter_hit = result.max_iter_hit
        _log.info(
            "Deformable level %d (1/%d, %dx%d nodes, alpha %g): %d iterations, J %.6g -> %.6g, NGF %.6g (%s)",
            level,
            scale,
            grid.gw,
            grid.gh,
            alpha,
            result.iterations,
            result.trace[0],
            result.value,
            state.value,
            result.stop_reason,
        )

    assert grid is not None
    stage.transform = CompositeTransform(init, grid)
    if stage.overlap < cfg.low_overlap_frac:
        _log.warning("Low overlap after deformable registration: %.1f%% of reference pixels", 100 * stage.overlap)
    return stage


def alpha_score(reference: Image, moving: Image, transform: CompositeTransform, cfg: RegConfig) -> float:
    """Local NCC of the reference against the moving image pulled back through `transform`."""
    warped = warp_image(reference.width, reference.height, reference.mpp, transform, moving)
    return local_ncc(reference, warped, cfg.similarity()).value


def select_alpha(
    reference: Image, moving: Image, init: AffineTransform, cfg: RegConfig, alphas: Sequence[float]
) -> tuple[float, StageResult]:
    """
    Runs the deformable stage for each alpha and keeps the result with the highest
    local NCC (see alpha_score), a measure the optimizer never sees. Ties keep the
    earlier alpha.
    """
    if not alphas:
        raise ArgumentError("select_alpha needs at least one alpha")
    best: tuple[float, StageResult, float] | None = None
    for alpha in alphas:
        stage = deformable_register_lbfgs(reference, moving, init, cfg, alpha)
        score = alpha_score(reference, moving, stage.transform, cfg)
        _log.debug("Alpha %g: final NGF %.6g, local NCC %.6g", alpha, stage.final_value, score)
        if best is None or score > best[2]:
            best = (alpha, stage, score)
    assert best is not None
    alpha, stage, score = best
    _log.info("Selected alpha %g (local NCC %.6g, NGF %.6g)", alpha, score, stage.final_value)
    return alpha, stage
