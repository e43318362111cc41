# src/stainreg/raster/preprocess.py
import logging
import math

import numpy as np
from scipy import ndimage

from stainreg.errors import ArgumentError, EmptyMassError
from stainreg.raster.image import Image, Pyramid
from stainreg.util import quantize_u8, require

_log = logging.getLogger(__name__)

# Rec.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def luminance(image: Image) -> np.ndarray:
    """8-bit Rec.601 gray levels of `image` (already-gray images pass through)."""
    if image.is_gray:
        return image.to_bytes()
    rgb = image.to_bytes().astype(np.float64)
    return quantize_u8(rgb @ LUMA_WEIGHTS)


def to_gray_inverted(image: Image) -> Image:
    """Gray conversion followed by inversion, so white background becomes 0."""
    return Image(255 - luminance(image), image.mpp)


def invert(image: Image) -> Image:
    """255 - value on the 8-bit samples; an involution on gray images."""
    return Image(255 - image.to_bytes(), image.mpp)


def downsample(image: Image, factor: int | None = None, max_dim: int | None = None) -> Image:
    """
    Box-filter downsampling by an integer factor.

    Exactly one of `factor` and `max_dim` is given; `max_dim` picks the smallest
    factor whose result fits. Edge boxes average only the samples they cover.
    8-bit input is re-quantized with round-half-away; real input stays real.
    """
    require((factor is None) != (max_dim is None), "downsample takes exactly one of factor or max_dim")
    if max_dim is not None:
        require(max_dim >= 1, f"max_dim must be >= 1, got {max_dim}")
        factor = max(1, math.ceil(max(image.width, image.height) / max_dim))
    assert factor is not None
    require(int(factor) == factor and factor >= 1, f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return image

    values = image.data.astype(np.float64)
    rows = np.arange(0, image.height, factor)
    cols = np.arange(0, image.width, factor)
    sums = np.add.reduceat(np.add.reduceat(values, rows, axis=0), cols, axis=1)
    counts = np.outer(np.diff(np.append(rows, image.height)), np.diff(np.append(cols, image.width)))
    if values.ndim == 3:
        counts = counts[:, :, None]
    means = sums / counts

    if image.data.dtype == np.uint8:
        out = quantize_u8(means)
    else:
        out = np.clip(means, 0.0, 1.0)
    return Image(out, image.mpp * factor)


def equalize_clahe(image: Image, tiles: int = 8, clip: float = 0.01) -> Image:
    """
    Contrast limited adaptive histogram equalization on 8-bit gray levels.

    Each tile's 256-bin histogram is clipped at `clip` times the tile's pixel
    count, the excess spread evenly over all bins, and turned into the map
    255 * cdf. Maps are blended bilinearly between tile centers and floored.
    A tile holding a single gray level keeps the identity map.
    """
    image.require_gray("equalize_clahe")
    require(int(tiles) == tiles and tiles >= 1, f"tiles must be a positive integer, got {tiles}")
    require(0.0 < clip <= 1.0, f"clip must lie in (0, 1], got {clip}")

    values = image.to_bytes()
    height, width = values.shape
    tiles_y, tiles_x = min(int(tiles), height), min(int(tiles), width)
    y_edges = np.linspace(0, height, tiles_y + 1).astype(int)
    x_edges = np.linspace(0, width, tiles_x + 1).astype(int)

    maps = np.empty((tiles_y, tiles_x, 256))
    for i in range(tiles_y):
        for j in range(tiles_x):
            tile = values[y_edges[i] : y_edges[i + 1], x_edges[j] : x_edges[j + 1]]
            hist = np.bincount(tile.ravel(), minlength=256).astype(np.float64)
            if np.count_nonzero(hist) == 1:
                maps[i, j] = np.arange(256, dtype=np.float64)
                continue
            limit = clip * tile.size
            excess = np.sum(np.maximum(hist - limit, 0.0))
            hist = np.minimum(hist, limit) + excess / 256.0
            maps[i, j] = 255.0 * np.cumsum(hist) / tile.size

    def _blend_axis(length: int, edges: np.ndarray, count: int):
        centers = (edges[:-1] + edges[1:] - 1) / 2.0
        position = np.interp(np.arange(length), centers, np.arange(count))
        lower = np.floor(position).astype(int)
        upper = np.minimum(lower + 1, count - 1)
        return lower, upper, position - lower

    y0, y1, wy = _blend_axis(height, y_edges, tiles_y)
    x0, x1, wx = _blend_axis(width, x_edges, tiles_x)
    y0, y1, wy = y0[:, None], y1[:, None], wy[:, None]
    x0, x1, wx = x0[None, :], x1[None, :], wx[None, :]

    blended = (
        (1 - wy) * (1 - wx) * maps[y0, x0, values]
        + (1 - wy) * wx * maps[y0, x1, values]
        + wy * (1 - wx) * maps[y1, x0, values]
        + wy * wx * maps[y1, x1, values]
    )
    return Image(np.floor(np.clip(blended, 0, 255)).astype(np.uint8), image.mpp)


def sigma_in_pixels(sigma_um: float, mpp: float) -> float:
    return sigma_um / mpp


def gaussian_kernel(sigma_px: float) -> np.ndarray:
    """Normalized 1-D Gaussian weights with radius ceil(3 sigma)."""
    radius = math.ceil(3.0 * sigma_px)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * sigma_px**2))
    return weights / weights.sum()


def gaussian_smooth(image: Image, sigma_um: float) -> Image:
    """Separable Gaussian smoothing with sigma given in microns; replicate-edge padding."""
    image.require_gray("gaussian_smooth")
    if not (math.isfinite(sigma_um) and sigma_um >= 0):
        raise ArgumentError(f"sigma_um must be a non-negative number, got {sigma_um}")
    sigma_px = sigma_in_pixels(sigma_um, image.mpp)
    if sigma_px == 0:
        return image

    kernel = gaussian_kernel(sigma_px)
    smoothed = ndimage.correlate1d(image.unit(), kernel, axis=0, mode="nearest")
    smoothed = ndimage.correlate1d(smoothed, kernel, axis=1, mode="nearest")
    _log.debug("Gaussian smoothing: sigma %.4f px, kernel radius %d", sigma_px, len(kernel) // 2)
    return Image(np.clip(smoothed, 0.0, 1.0), image.mpp)


def crop_border(image: Image, frac: float) -> tuple[Image, tuple[int, int]]:
    """Removes floor(frac * dim) pixels from both sides of each axis. Returns (crop, (x0, y0))."""
    require(0.0 <= frac < 0.5, f"frac must lie in [0, 0.5), got {frac}")
    dx = math.floor(frac * image.width)
    dy = math.floor(frac * image.height)
    if image.width - 2 * dx < 1 or image.height - 2 * dy < 1:
        raise ArgumentError(f"Cropping {frac} of a {image.width}x{image.height} image leaves nothing")
    cropped = image.data[dy : image.height - dy, dx : image.width - dx]
    return Image(np.array(cropped), image.mpp), (dx, dy)


def remove_dark_border(image: Image, max_value: int = 20, max_frac: float = 0.25) -> tuple[Image, tuple[int, int]]:
    """
    Strips dark scanner borders: whole edge rows/columns whose mean gray level is at
    most `max_value`, at most `max_frac` of the dimension per side.
    """
    image.require_gray("remove_dark_border")
    values = image.to_bytes().astype(np.float64)
    row_means = values.mean(axis=1)
    col_means = values.mean(axis=0)

    def _run(means: np.ndarray) -> int:
        limit = math.floor(max_frac * len(means))
        dark = means[:limit] <= max_value
        return int(np.argmin(dark)) if not dark.all() else limit

    top, bottom = _run(row_means), _run(row_means[::-1])
    left, right = _run(col_means), _run(col_means[::-1])
    if top or bottom or left or right:
        _log.info("Removing dark border: top %d, bottom %d, left %d, right %d", top, bottom, left, right)
    cropped = image.data[top : image.height - bottom, left : image.width - right]
    return Image(np.array(cropped), image.mpp), (left, top)


def center_of_mass(image: Image) -> tuple[float, float]:
    """Intensity-weighted mean of pixel-center coordinates, as (x, y)."""
    image.require_gray("center_of_mass")
    weights = image.unit()
    if weights.sum() <= 0:
        raise EmptyMassError()
    cy, cx = ndimage.center_of_mass(weights)
    return float(cx), float(cy)


def build_pyramid(image: Image, factor: int = 2, min_dim: int = 32) -> Pyramid:
    """Repeated downsampling until the next level would fall below `min_dim`."""
    require(int(factor) == factor and factor >= 2, f"factor must be an integer >= 2, got {factor}")
    require(min_dim >= 8, f"min_dim must be >= 8, got {min_dim}")
    levels = [image]
    current = image
    while math.ceil(max(current.width, current.height) / factor) >= min_dim:
        current = downsample(current, factor=int(factor))
        levels.append(current)
    _log.debug("Built %d-level pyramid from %dx%d", len(levels), image.width, image.height)
    return Pyramid(tuple(levels), int(factor))
