# src/stainreg/register/prealign.py
import logging
import math

import numpy as np

from stainreg.errors import ArgumentError, EmptyMaskError, OverlapError
from stainreg.raster.image import Image, Mask
from stainreg.raster.masks import tissue_bounding_box
from stainreg.raster.preprocess import center_of_mass, downsample
from stainreg.register.optim import Evaluation, gauss_newton
from stainreg.register.results import PrealignResult
from stainreg.register.settings import RegConfig
from stainreg.similarity.measures import conv_score_map, ncc_score_map
from stainreg.similarity.ngf import NGFObjective
from stainreg.transform.geometry import CompositeTransform, RigidParams, warp_image

_log = logging.getLogger(__name__)


def rigid_jacobian(phi: float, center: np.ndarray) -> np.ndarray:
    """d(a11, a12, a21, a22, tx, ty) / d(phi, tx, ty) for rotation about `center`."""
    c, s = math.cos(phi), math.sin(phi)
    d_rotation = np.array([[-s, -c], [c, -s]])
    d_translation = -d_rotation @ center
    jacobian = np.zeros((6, 3))
    jacobian[:4, 0] = d_rotation.ravel()
    jacobian[4:, 0] = d_translation
    jacobian[4, 1] = 1.0
    jacobian[5, 2] = 1.0
    return jacobian


def rigid_objective(objective: NGFObjective, center: np.ndarray):
    """Gauss-Newton evaluation of NGF over rigid parameters (phi, tx, ty) rotating about `center`."""

    def evaluate(theta: np.ndarray) -> Evaluation:
        phi, tx, ty = theta
        rigid = RigidParams(phi, tx, ty, center[0], center[1])
        state = objective.evaluate(rigid.to_affine())
        matrix, gradient = objective.gauss_newton_system(state)
        jacobian = rigid_jacobian(phi, center)
        return Evaluation(state.value, jacobian.T @ gradient, jacobian.T @ matrix @ jacobian)

    return evaluate


def _level_factor(reference: Image, moving: Image, max_dim: int) -> int:
    return max(1, math.ceil(max(reference.width, reference.height, moving.width, moving.height) / max_dim))


def ara_prealign(reference: Image, moving: Image, masks: tuple[Mask, Mask], cfg: RegConfig) -> PrealignResult:
    """
    Automatic rotation alignment.

    The translation starts at the vector between the masked centers of mass; for
    each of `n_rotations` equidistant angles a short rigid Gauss-Newton refinement
    of masked NGF runs, and the refined start with the lowest distance wins.
    """
    reference_mask, moving_mask = masks
    if reference_mask.is_empty:
        raise EmptyMaskError("reference mask")
    if moving_mask.is_empty:
        raise EmptyMaskError("moving mask")

    factor = _level_factor(reference, moving, cfg.ara_max_dim)
    ref_level = downsample(reference_mask.apply(reference), factor=factor)
    mov_level = downsample(moving_mask.apply(moving), factor=factor)

    cx, cy = center_of_mass(ref_level)
    mx, my = center_of_mass(mov_level)
    center = np.array([cx, cy])
    objective = NGFObjective(ref_level, mov_level, cfg.similarity())
    evaluate = rigid_objective(objective, center)
    settings = cfg.optimizer(cfg.rigid_iters)

    angles = [2.0 * math.pi * k / cfg.n_rotations for k in range(cfg.n_rotations)]
    scores: list[float] = []
    best_theta = np.array([0.0, mx - cx, my - cy])
    best_score = math.inf
    for angle in angles:
        start = np.array([angle, mx - cx, my - cy])
        try:
            result = gauss_newton(evaluate, start, settings)
        except OverlapError:
            scores.append(math.inf)
            continue
        scores.append(result.value)
        if result.value < best_score:
            best_score, best_theta = result.value, result.x
    if not math.isfinite(best_score):
        raise OverlapError()
    _log.info(
        "ARA: %d angles at 1/%d resolution, best start %.1f deg, refined phi %.2f deg, NGF %.6g",
        len(angles),
        factor,
        math.degrees(angles[int(np.argmin(scores))]),
        math.degrees(best_theta[0]),
        best_score,
    )

    phi, tx, ty = best_theta
    offset = (factor - 1) / 2.0
    rigid = RigidParams(
        math.remainder(phi, 2.0 * math.pi), factor * tx, factor * ty, factor * cx + offset, factor * cy + offset
    )
    return PrealignResult(rigid, tuple(angles), tuple(scores))


def _rotated_about(image: Image, phi: float, center: tuple[float, float]) -> Image:
    """image resampled so content turns by `phi` about `center`, same raster."""
    pull_back = RigidParams(-phi, 0.0, 0.0, center[0], center[1]).to_affine()
    return warp_image(image.width, image.height, image.mpp, CompositeTransform(pull_back), image)


def _tissue_crop(template: Image) -> tuple[Image, tuple[int, int]]:
    """Template cut to its tissue bounding box, with the box origin (x0, y0)."""
    x0, y0, x1, y1 = tissue_bounding_box(template)
    return template.replace(template.data[y0:y1, x0:x1]), (x0, y0)


def template_match_rotational(
    fixed: Image, moving: Image, cfg: RegConfig, moving_mask: Mask | None = None
) -> PrealignResult:
    """
    Exhaustive rotation search with template scoring.

    `conv_full` turns the moving image in `rotation_stride_deg` steps over a
    full turn and scores every integer offset with the convolution score;
    `ncc_binary` tries 0 and 180 degrees with normalized cross-correlation.
    The moving image turns about its (masked) center of mass and is cut to its
    tissue box; the fixed image is zero-padded by half the template on every
    side so any placement with the template center inside it is scored.
    """
    match cfg.prealign_mode:
        case "conv_full":
            angles_deg = np.arange(0.0, 360.0, cfg.rotation_stride_deg)
            score_map = conv_score_map
        case "ncc_binary":
            angles_deg = np.array([0.0, 180.0])
            score_map = ncc_score_map
        case _:
            raise ArgumentError(f"template matching does not support prealign_mode '{cfg.prealign_mode}'")

    fixed.require_gray("template matching")
    weights = moving if moving_mask is None else moving_mask.apply(moving)
    center = center_of_mass(weights)

    best = (-math.inf, 0.0, (0, 0))
    scores = []
    for angle in angles_deg:
        phi = math.radians(float(angle))
        template, (x0, y0) = _tissue_crop(_rotated_about(moving, phi, center))
        pad_x, pad_y = template.width // 2, template.height // 2
        padded = fixed.replace(np.pad(fixed.data, ((pad_y, pad_y), (pad_x, pad_x))))
        scored = score_map(padded, template)
        value = float(scored.best)
        scores.append(value)
        if value > best[0]:
            dx, dy = scored.argmax
            best = (value, phi, (dx - pad_x - x0, dy - pad_y - y0))

    value, phi, (dx, dy) = best
    _log.info(
        "Template match (%s): angle %.1f deg, offset (%d, %d), score %.6g",
        cfg.prealign_mode,
        math.degrees(phi),
        dx,
        dy,
        value,
    )
    rigid = RigidParams(-phi, -float(dx), -float(dy), center[0] + dx, center[1] + dy)
    return PrealignResult(rigid, tuple(math.radians(float(a)) for a in angles_deg), tuple(scores))
