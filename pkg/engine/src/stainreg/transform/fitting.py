# src/stainreg/transform/fitting.py
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from stainreg.errors import ArgumentError, FitFailureError
from stainreg.synthgen.prng import PrngStream
from stainreg.transform.geometry import AffineTransform
from stainreg.util import require

_log = logging.getLogger(__name__)

DEFAULT_INLIER_PX = 50.0
DEFAULT_RANSAC_ITERS = 1000
SCALE_RANGE = (0.95, 1.05)


def _pair_arrays(moving, reference) -> tuple[np.ndarray, np.ndarray]:
    moving = np.asarray(moving, dtype=np.float64).reshape(-1, 2)
    reference = np.asarray(reference, dtype=np.float64).reshape(-1, 2)
    if moving.shape != reference.shape:
        raise ArgumentError(f"Point sets differ in size: {len(moving)} moving vs {len(reference)} reference")
    return moving, reference


def fit_similarity_ls(moving, reference) -> tuple[AffineTransform, float]:
    """
    Least-squares similarity y = s R x + t with y ~ moving and x = reference.

    Closed form from the SVD of the centered cross-covariance, with the
    reflection removed. Returns (transform, residual RMS in px).
    """
    moving, reference = _pair_arrays(moving, reference)
    if len(moving) < 2:
        raise ArgumentError(f"Similarity fitting needs at least 2 point pairs, got {len(moving)}")

    mean_ref = reference.mean(axis=0)
    mean_mov = moving.mean(axis=0)
    centered_ref = reference - mean_ref
    centered_mov = moving - mean_mov
    spread = np.mean(np.sum(centered_ref**2, axis=1))
    if spread == 0:
        raise ArgumentError("All reference points coincide; similarity is undetermined")

    covariance = centered_mov.T @ centered_ref / len(moving)
    u, singular, vt = np.linalg.svd(covariance)
    flip = np.diag([1.0, -1.0 if np.linalg.det(u) * np.linalg.det(vt) < 0 else 1.0])
    rotation = u @ flip @ vt
    scale = float(np.trace(np.diag(singular) @ flip) / spread)

    matrix = scale * rotation
    affine = AffineTransform.from_matrix(matrix, mean_mov - matrix @ mean_ref)
    residuals = affine.apply(reference) - moving
    rms = float(np.sqrt(np.mean(np.sum(residuals**2, axis=1))))
    return affine, rms


def similarity_scale(affine: AffineTransform) -> float:
    return math.sqrt(abs(affine.det))


@dataclass
class RansacResult:
    transform: AffineTransform
    inliers: np.ndarray
    iterations: int
    best_count: int


def fit_similarity_ransac(
    moving,
    reference,
    inlier_px: float = DEFAULT_INLIER_PX,
    iters: int = DEFAULT_RANSAC_ITERS,
    seed: int = 0,
    constrain_scale: bool = False,
    dice: Callable[[AffineTransform], float] | None = None,
) -> RansacResult:
    """
    Seeded two-point RANSAC for a similarity transform, refit by least squares on the inliers.

    A pair is an inlier when its residual is below `inlier_px`. Pairs are put into
    a canonical order before sampling, so the result does not depend on how the
    caller ordered them. With `constrain_scale`, minimal models whose scale falls
    outside [0.95, 1.05] are skipped. With a `dice` callback the score of a model
    is (rescaled inlier count)^2 + (rescaled Dice)^2, both min/max-rescaled over
    all evaluated models; otherwise it is the inlier count.
    """
    moving, reference = _pair_arrays(moving, reference)
    require(inlier_px > 0, f"inlier_px must be positive, got {inlier_px}")
    require(iters >= 1, f"iters must be >= 1, got {iters}")
    if len(moving) < 2:
        raise ArgumentError(f"RANSAC needs at least 2 point pairs, got {len(moving)}")

    order = np.lexsort((reference[:, 1], reference[:, 0], moving[:, 1], moving[:, 0]))
    mov, ref = moving[order], reference[order]
    n = len(mov)
    stream = PrngStream(seed, 0)

    models: list[AffineTransform] = []
    inlier_sets: list[np.ndarray] = []
    for _ in range(iters):
        i = stream.integer(n)
        j = stream.integer(n - 1)
        if j >= i:
            j += 1
        if np.array_equal(ref[i], ref[j]) or np.array_equal(mov[i], mov[j]):
            continue
        model, _ = fit_similarity_ls(mov[[i, j]], ref[[i, j]])
        if constrain_scale and not (SCALE_RANGE[0] <= similarity_scale(model) <= SCALE_RANGE[1]):
            continue
        residuals = np.linalg.norm(model.apply(ref) - mov, axis=1)
        models.append(model)
        inlier_sets.append(residuals < inlier_px)

    if not models:
        raise FitFailureError("RANSAC found no admissible minimal model")

    counts = np.array([flags.sum() for flags in inlier_sets], dtype=np.float64)
    if dice is None:
        scores = counts
    else:
        overlaps = np.array([dice(model) for model in models])
        scores = _minmax(counts) ** 2 + _minmax(overlaps) ** 2
    best = int(np.argmax(scores))
    best_inliers = inlier_sets[best]
    if best_inliers.sum() < 2:
        raise FitFailureError(f"Best RANSAC model has {int(best_inliers.sum())} inlier(s); need at least 2")

    refit, rms = fit_similarity_ls(mov[best_inliers], ref[best_inliers])
    _log.info(
        "RANSAC: %d/%d inliers after %d models, refit RMS %.3f px", int(best_inliers.sum()), n, len(models), rms
    )

    inliers = np.empty(n, dtype=bool)
    inliers[order] = best_inliers
    return RansacResult(refit, inliers, len(models), int(best_inliers.sum()))


def _minmax(values: np.ndarray) -> np.ndarray:
    span = values.max() - values.min()
    if span == 0:
        return np.ones_like(values)
    return (values - values.min()) / span
