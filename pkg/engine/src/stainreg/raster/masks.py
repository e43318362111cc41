# src/stainreg/raster/masks.py
import logging

import numpy as np
from scipy import ndimage
from scipy.cluster.vq import vq

from stainreg.errors import DegenerateInputError, EmptyMaskError
from stainreg.raster.image import Image, Mask, Pyramid
from stainreg.raster.preprocess import downsample
from stainreg.util import require

_log = logging.getLogger(__name__)

KMEANS_CLUSTERS = 3
KMEANS_MAX_ITER = 100


def threshold_mask(image: Image, lo: int, hi: int) -> Mask:
    """Foreground iff lo <= value <= hi on the raw (un-inverted) gray levels."""
    image.require_gray("threshold_mask")
    require(0 <= lo <= 255 and 0 <= hi <= 255, f"thresholds must lie in [0, 255], got ({lo}, {hi})")
    require(lo <= hi, f"lower threshold {lo} exceeds upper threshold {hi}")
    values = image.to_bytes()
    return Mask((values >= lo) & (values <= hi))


def kmeans_mask(image: Image, max_iter: int = KMEANS_MAX_ITER) -> Mask:
    """
    Three-cluster 1-D k-means on gray levels; the two darker clusters are tissue.

    Centroids start at the min, median and max of the observed values and Lloyd
    iterations run until the assignment stops changing or `max_iter` is hit.
    """
    image.require_gray("kmeans_mask")
    values = image.to_bytes().ravel().astype(np.float64)
    distinct = np.unique(values).size
    if distinct < KMEANS_CLUSTERS:
        raise DegenerateInputError(f"k-means needs at least 3 distinct gray levels, found {distinct}")

    centroids = np.array([values.min(), np.median(values), values.max()])
    labels = None
    for iteration in range(max_iter):
        new_labels, _ = vq(values[:, None], centroids[:, None])
        if labels is not None and np.array_equal(new_labels, labels):
            _log.debug("k-means converged after %d iterations: centroids %s", iteration, centroids)
            break
        labels = new_labels
        for k in range(KMEANS_CLUSTERS):
            members = values[labels == k]
            if members.size:
                centroids[k] = members.mean()
    assert labels is not None

    tissue_clusters = np.argsort(centroids, kind="stable")[:2]
    return Mask(np.isin(labels, tissue_clusters).reshape(image.shape))


def _select_components(mask: Mask, min_keep: int) -> tuple[Mask, int]:
    if mask.is_empty:
        raise EmptyMaskError("tissue mask")
    labels, count = ndimage.label(mask.bits)
    areas = np.bincount(labels.ravel())[1:]
    order = np.argsort(-areas, kind="stable")
    sorted_areas = areas[order]

    if count == 1:
        keep = 1
    else:
        gaps = sorted_areas[:-1] - sorted_areas[1:]
        keep = count if gaps.max() == 0 else int(np.argmax(gaps)) + 1
    keep = max(keep, min(min_keep, count))

    _log.debug("Component areas %s: keeping %d of %d", sorted_areas.tolist(), keep, count)
    return Mask(np.isin(labels, order[:keep] + 1)), keep


def largest_gap_select(mask: Mask, min_keep: int = 1) -> Mask:
    """
    Keeps the large-area group of 4-connected components.

    Components are sorted by area (descending) and split at the first largest
    difference between neighbours. If every difference is zero all components
    stay. Next-largest components are added until at least `min_keep` remain.
    """
    require(min_keep >= 1, f"min_keep must be >= 1, got {min_keep}")
    selected, _ = _select_components(mask, min_keep)
    return selected


def select_tissue_pair(fixed: Mask, moving: Mask) -> tuple[Mask, Mask]:
    """Largest-gap selection on both masks, topped up so both keep the same number of parts."""
    fixed_sel, fixed_kept = _select_components(fixed, 1)
    moving_sel, moving_kept = _select_components(moving, 1)
    target = max(fixed_kept, moving_kept)
    if fixed_kept < target:
        fixed_sel, fixed_kept = _select_components(fixed, target)
    if moving_kept < target:
        moving_sel, moving_kept = _select_components(moving, target)
    _log.info("Tissue parts kept: fixed %d, moving %d", fixed_kept, moving_kept)
    return fixed_sel, moving_sel


def tissue_bounding_box(source: Image | Mask, frac: float = 0.05) -> tuple[int, int, int, int]:
    """Half-open (x0, y0, x1, y1) box where row/column profiles exceed frac * their maximum."""
    require(0.0 <= frac < 1.0, f"frac must lie in [0, 1), got {frac}")
    if isinstance(source, Mask):
        weights = source.bits.astype(np.float64)
    else:
        source.require_gray("tissue_bounding_box")
        weights = source.unit()
    cols = weights.sum(axis=0)
    rows = weights.sum(axis=1)
    if cols.max() <= 0:
        raise EmptyMaskError("tissue profile")
    xs = np.flatnonzero(cols > frac * cols.max())
    ys = np.flatnonzero(rows > frac * rows.max())
    return int(xs[0]), int(ys[0]), int(xs[-1]) + 1, int(ys[-1]) + 1


def resize_mask(mask: Mask, factor: int) -> Mask:
    """Box downsampling of a mask: an output pixel is foreground iff at least half its box is."""
    if factor == 1:
        return mask
    coverage = downsample(Image(mask.bits.astype(np.float64)), factor=factor)
    return Mask(coverage.unit() >= 0.5)


def mask_pyramid(mask: Mask, pyramid: Pyramid) -> list[Mask]:
    """Masks matching every level of `pyramid`, obtained by repeated resize_mask."""
    require(mask.shape == pyramid[0].shape, f"mask shape {mask.shape} differs from level 0 {pyramid[0].shape}")
    masks = [mask]
    for _ in range(1, len(pyramid)):
        masks.append(resize_mask(masks[-1], pyramid.factor))
    return masks
