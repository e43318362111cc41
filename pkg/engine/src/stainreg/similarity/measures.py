# src/stainreg/similarity/measures.py
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from stainreg.errors import ArgumentError, GeometryMismatchError
from stainreg.raster.image import Image

_log = logging.getLogger(__name__)

# Variances at or below this are treated as zero (constant input).
DEGENERATE_VARIANCE = 1e-12


@dataclass(frozen=True)
class SimilarityConfig:
    """NGF edge parameter, the h^2/2 sum weight, and the local-NCC window size."""

    epsilon: float = 0.01
    h: float = 1.0
    window: int = 9

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise ArgumentError(f"h must be positive, got {self.h}")
        if self.window < 3 or self.window % 2 == 0:
            raise ArgumentError(f"window must be odd and >= 3, got {self.window}")

    @property
    def weight(self) -> float:
        return self.h**2 / 2.0


class Correlation(NamedTuple):
    value: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Scores per integer offset: values[dy, dx]."""

    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def argmax(self) -> tuple[int, int]:
        """(dx, dy) of the first maximum in row-major order."""
        dy, dx = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(dx), int(dy)

    @property
    def best(self):
        dx, dy = self.argmax
        return self.values[dy, dx]


def _same_geometry(a: Image, b: Image) -> None:
    if a.data.shape != b.data.shape:
        raise GeometryMismatchError(a.data.shape, b.data.shape)


def ncc(a: Image, b: Image) -> Correlation:
    """Pearson correlation of intensities; a constant input gives 0 flagged degenerate."""
    _same_geometry(a, b)
    if a.width * a.height < 2:
        raise ArgumentError("ncc needs more than one pixel")
    x = a.unit().ravel()
    y = b.unit().ravel()
    x = x - x.mean()
    y = y - y.mean()
    var_x = np.mean(x * x)
    var_y = np.mean(y * y)
    if var_x <= DEGENERATE_VARIANCE or var_y <= DEGENERATE_VARIANCE:
        return Correlation(0.0, True)
    value = float(np.mean(x * y) / math.sqrt(var_x * var_y))
    return Correlation(min(1.0, max(-1.0, value)), False)


def local_ncc(a: Image, b: Image, cfg: SimilarityConfig) -> Correlation:
    """
    Mean NCC over every window x window patch (stride 1, fully inside the image).
    Windows where either image is constant contribute 0; the flag reports
    whether every window was degenerate.
    """
    _same_geometry(a, b)
    a.require_gray("local_ncc")
    window = cfg.window
    if window > min(a.width, a.height):
        raise ArgumentError(f"window {window} exceeds image size {a.width}x{a.height}")

    x = a.unit()
    y = b.unit()

    def _mean(values: np.ndarray) -> np.ndarray:
        return ndimage.uniform_filter(values, size=window, mode="nearest")

    r = window // 2
    valid = (slice(r, x.shape[0] - r), slice(r, x.shape[1] - r))
    mean_x, mean_y = _mean(x)[valid], _mean(y)[valid]
    var_x = _mean(x * x)[valid] - mean_x**2
    var_y = _mean(y * y)[valid] - mean_y**2
    cov = _mean(x * y)[valid] - mean_x * mean_y

    ok = (var_x > DEGENERATE_VARIANCE) & (var_y > DEGENERATE_VARIANCE)
    scores = np.zeros_like(cov)
    scores[ok] = np.clip(cov[ok] / np.sqrt(var_x[ok] * var_y[ok]), -1.0, 1.0)
    return Correlation(float(scores.mean()), not ok.any())


def mse(a: Image, b: Image) -> float:
    """Mean squared difference of unit-interval intensities."""
    _same_geometry(a, b)
    return float(np.mean((a.unit() - b.unit()) ** 2))


def _check_template(image: Image, template: Image) -> None:
    image.require_gray("template scoring")
    template.require_gray("template scoring")
    if template.height > image.height or template.width > image.width:
        raise ArgumentError(
            f"Template {template.width}x{template.height} is larger than image {image.width}x{image.height}"
        )


def conv_score_map(image: Image, template: Image) -> ScoreMap:
    """
    Valid-mode cross-correlation of 8-bit samples:
    values[dy, dx] = sum template(u, v) * image(dx + u, dy + v), as exact integers.
    """
    _check_template(image, template)
    flipped = np.flipud(np.fliplr(template.to_bytes().astype(np.float64)))
    raw = fftconvolve(image.to_bytes().astype(np.float64), flipped, mode="valid")
    return ScoreMap(np.rint(raw).astype(np.int64))


def ncc_score_map(image: Image, template: Image) -> ScoreMap:
    """Zero-mean normalized cross-correlation of `template` at every valid offset; flat windows score 0."""
    _check_template(image, template)
    t = template.unit()
    t = t - t.mean()
    t_energy = np.sum(t * t)
    img = image.unit()
    ones = np.ones(t.shape)

    numerator = fftconvolve(img, np.flipud(np.fliplr(t)), mode="valid")
    local_sum = fftconvolve(img, ones, mode="valid")
    local_energy = fftconvolve(img * img, ones, mode="valid") - local_sum**2 / t.size
    local_energy = np.maximum(local_energy, 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        scores = numerator / np.sqrt(local_energy * t_energy)
    flat = (local_energy <= DEGENERATE_VARIANCE * t.size) | (t_energy <= DEGENERATE_VARIANCE * t.size)
    scores[flat | ~np.isfinite(scores)] = 0.0
    return ScoreMap(np.clip(scores, -1.0, 1.0))
