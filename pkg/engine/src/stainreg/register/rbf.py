# src/stainreg/register/rbf.py
import logging
from dataclasses import dataclass

import numpy as np
from scipy import interpolate
from skimage import measure

from stainreg.errors import EmptyMaskError, FitFailureError
from stainreg.raster.image import Image, Mask
from stainreg.register.settings import RegConfig
from stainreg.similarity.measures import conv_score_map
from stainreg.transform.fitting import fit_similarity_ransac
from stainreg.transform.geometry import AffineTransform, CompositeTransform, DisplacementGrid, RigidParams, warp_image

_log = logging.getLogger(__name__)

MIN_KEYPOINTS = 4
RBF_KERNEL = "thin_plate_spline"


@dataclass(frozen=True, eq=False)
class RbfResult:
    transform: CompositeTransform
    keypoints: np.ndarray  # (K, 2) surviving keypoints, reference pixels
    corrections: np.ndarray  # (K, 2) measured shifts, reference pixels
    fallback: bool = False


def boundary_keypoints(mask: Mask, density: float, min_count: int = MIN_KEYPOINTS) -> np.ndarray:
    """
    Points spread evenly by arc length along every tissue boundary of `mask`.

    The count is one per `density` boundary pixels, at least `min_count`.
    Returned as (x, y) rows.
    """
    padded = np.pad(mask.bits.astype(np.float64), 1)
    contours = [c - 1.0 for c in measure.find_contours(padded, 0.5) if len(c) > 1]
    if not contours:
        raise EmptyMaskError("tissue boundary")

    starts = np.concatenate([contour[:-1] for contour in contours])
    ends = np.concatenate([contour[1:] for contour in contours])
    lengths = np.linalg.norm(ends - starts, axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cumulative[-1]

    count = max(min_count, round(total / density))
    positions = (np.arange(count) + 0.5) * total / count
    segment = np.clip(np.searchsorted(cumulative, positions, side="right") - 1, 0, len(lengths) - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(lengths[segment] > 0, (positions - cumulative[segment]) / lengths[segment], 0.0)
    points = starts[segment] + t[:, None] * (ends[segment] - starts[segment])
    _log.debug("Boundary length %.1f px over %d contours -> %d keypoints", total, len(contours), count)
    return points[:, ::-1].copy()


def snap_to_nodes(points: np.ndarray, grid: DisplacementGrid) -> np.ndarray:
    """Nearest control-node positions of `points`, duplicates removed (first occurrence order)."""
    i = np.clip(np.rint((points[:, 0] - grid.origin[0]) / grid.h), 0, grid.gw - 1).astype(np.int64)
    j = np.clip(np.rint((points[:, 1] - grid.origin[1]) / grid.h), 0, grid.gh - 1).astype(np.int64)
    _, first = np.unique(j * grid.gw + i, return_index=True)
    order = np.sort(first)
    return np.stack([grid.origin[0] + grid.h * i[order], grid.origin[1] + grid.h * j[order]], axis=1)


def _extract(data: np.ndarray, center: np.ndarray, size: int) -> np.ndarray:
    """size x size window whose top-left corner is round(center) - size / 2, zero-padded outside `data`."""
    x0 = int(round(center[0])) - size // 2
    y0 = int(round(center[1])) - size // 2
    out = np.zeros((size, size), dtype=data.dtype)
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + size, data.shape[1]), min(y0 + size, data.shape[0])
    if sx1 > sx0 and sy1 > sy0:
        out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = data[sy0:sy1, sx0:sx1]
    return out


def local_corrections(
    reference: Image, aligned: Image, keypoints: np.ndarray, patch: int, search: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    Shift c per keypoint such that reference(x) best matches aligned(x + c) near the keypoint,
    from the convolution score of a reference patch inside a larger aligned patch.
    Keypoints whose patches are blank are marked invalid.
    """
    margin = (search - patch) // 2
    corrections = np.zeros((len(keypoints), 2))
    valid = np.zeros(len(keypoints), dtype=bool)
    for k, point in enumerate(keypoints):
        template = _extract(reference.data, point, patch)
        window = _extract(aligned.data, point, search)
        if not template.any() or not window.any():
            continue
        dx, dy = conv_score_map(Image(window), Image(template)).argmax
        corrections[k] = (dx - margin, dy - margin)
        valid[k] = True
    return corrections, valid


def consistent_corrections(keypoints: np.ndarray, corrections: np.ndarray, inlier_px: float, seed: int) -> np.ndarray:
    """Inlier flags of the similarity RANSAC mapping keypoints onto their corrected positions."""
    try:
        fit = fit_similarity_ransac(keypoints + corrections, keypoints, inlier_px=inlier_px, seed=seed)
    except FitFailureError as e:
        _log.warning("Correction screening failed (%s); keeping every keypoint", e)
        return np.ones(len(keypoints), dtype=bool)
    if not fit.inliers.all():
        _log.info("Dropped %d inconsistent keypoint correction(s)", int((~fit.inliers).sum()))
    return fit.inliers


def rbf_deformable(
    reference: Image,
    moving: Image,
    init: RigidParams | AffineTransform,
    masks: tuple[Mask, Mask],
    cfg: RegConfig,
    seed: int = 0,
) -> RbfResult:
    """
    Local boundary corrections on top of a rigid start, interpolated with a thin-plate spline.

    Keypoints along the reference tissue boundary are snapped to control nodes,
    so the emitted grid reproduces each measured correction exactly at its node.
    Corrections that disagree with a seeded RANSAC similarity by more than
    `rbf_inlier_px` are dropped. Fewer than four usable keypoints fall back to
    the rigid start.
    """
    affine = init.to_affine() if isinstance(init, RigidParams) else init
    rigid_only = CompositeTransform(affine)
    reference_mask, _ = masks
    if reference_mask.is_empty:
        raise EmptyMaskError("reference mask")

    aligned = warp_image(reference.width, reference.height, reference.mpp, rigid_only, moving)
    grid = DisplacementGrid.covering(reference.width, reference.height, cfg.grid_h)
    keypoints = snap_to_nodes(boundary_keypoints(reference_mask, cfg.rbf_density), grid)
    corrections, valid = local_corrections(reference, aligned, keypoints, cfg.rbf_patch, cfg.rbf_search)
    keypoints, corrections = keypoints[valid], corrections[valid]
    if cfg.rbf_inlier_px > 0 and len(keypoints) >= MIN_KEYPOINTS:
        keep = consistent_corrections(keypoints, corrections, cfg.rbf_inlier_px, seed)
        keypoints, corrections = keypoints[keep], corrections[keep]

    if len(keypoints) < MIN_KEYPOINTS:
        _log.warning("Only %d usable keypoints; keeping the rigid transform", len(keypoints))
        return RbfResult(rigid_only, keypoints, corrections, fallback=True)

    displacements = corrections @ affine.matrix.T
    try:
        interpolant = interpolate.RBFInterpolator(keypoints, displacements, kernel=RBF_KERNEL, degree=1)
    except (ValueError, np.linalg.LinAlgError) as e:
        _log.warning("Thin-plate spline fit failed (%s); keeping the rigid transform", e)
        return RbfResult(rigid_only, keypoints, corrections, fallback=True)

    xs, ys = grid.node_positions()
    nx, ny = np.meshgrid(xs, ys)
    values = interpolant(np.stack([nx.ravel(), ny.ravel()], axis=1))
    deform = grid.with_flat(np.concatenate([values[:, 0], values[:, 1]]))
    _log.info(
        "RBF correction: %d keypoints, max |c| %.2f px, max |u| %.2f px",
        len(keypoints),
        float(np.abs(corrections).max()),
        deform.max_abs(),
    )
    return RbfResult(CompositeTransform(affine, deform), keypoints, corrections)
