# src/stainreg/synthgen/tissue.py
import logging
import math

import numpy as np
from scipy import ndimage

from stainreg.errors import GenerationError
from stainreg.raster.image import Image, Mask
from stainreg.synthgen.prng import PrngStream, prng_stream
from stainreg.synthgen.settings import STAIN_STREAM, TISSUE_STREAM, SynthSpec
from stainreg.util import quantize_u8

_log = logging.getLogger(__name__)

MAX_COVERAGE = 0.9
# Per-channel light absorption of the synthetic stain (R, G, B); pink-purple tissue on white.
ABSORPTION = np.array([0.35, 0.75, 0.45])
SPECKLE_DARKNESS = 0.85
SPECKLE_AREA = 400  # one speckle per this many foreground pixels

STAIN_TINTS = (
    (0.55, 0.8, 1.0),  # brown
    (1.0, 0.85, 0.55),  # blue
)
IDENTITY_TINT = (1.0, 1.0, 1.0)
GAMMA_RANGE = (0.6, 1.6)
NOISE_SIGMA = 4.0 / 255.0


def _ellipse(stream: PrngStream, width: int, height: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    short = min(width, height)
    cx = stream.uniform_range(0.2, 0.8) * (width - 1)
    cy = stream.uniform_range(0.2, 0.8) * (height - 1)
    a = stream.uniform_range(0.14, 0.25) * short
    b = stream.uniform_range(0.14, 0.25) * short
    theta = stream.uniform_range(0.0, math.pi)
    c, s = math.cos(theta), math.sin(theta)
    u = (xs - cx) * c + (ys - cy) * s
    v = -(xs - cx) * s + (ys - cy) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _speckles(stream: PrngStream, bits: np.ndarray, darkness: np.ndarray) -> int:
    """Darkens small nuclei-like disks centered on random foreground pixels; returns their count."""
    fy, fx = np.nonzero(bits)
    count = fy.size // SPECKLE_AREA
    height, width = bits.shape
    for _ in range(count):
        k = stream.integer(fy.size)
        radius = stream.uniform_range(1.5, 3.5)
        x0, x1 = max(0, int(fx[k] - radius)), min(width, int(fx[k] + radius) + 1)
        y0, y1 = max(0, int(fy[k] - radius)), min(height, int(fy[k] + radius) + 1)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        disk = ((xs - fx[k]) ** 2 + (ys - fy[k]) ** 2 <= radius * radius) & bits[y0:y1, x0:x1]
        darkness[y0:y1, x0:x1][disk] = SPECKLE_DARKNESS
    return count


def gen_tissue_image(spec: SynthSpec) -> tuple[Image, Mask]:
    """
    A tissue-like RGB section on a white background, with its tissue mask.

    Blobs are random filled ellipses; inside them the stain density is a
    low-frequency sinusoid plus smoothed seeded noise, sprinkled with darker
    speckles. The mask is the union of the ellipses.
    """
    width, height = spec.width, spec.height
    stream = prng_stream(spec.seed, TISSUE_STREAM)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)

    bits = np.zeros((height, width), dtype=bool)
    for _ in range(spec.n_blobs):
        bits |= _ellipse(stream, width, height, xs, ys)
    coverage = float(bits.mean())
    if coverage > MAX_COVERAGE:
        raise GenerationError(f"{spec.n_blobs} blobs cover {coverage:.1%} of the frame (limit {MAX_COVERAGE:.0%})")
    if not bits.any():
        _log.debug("Case %s has no tissue", spec.pair_id)
        return Image(np.full((height, width, 3), 255, dtype=np.uint8), spec.mpp), Mask(bits)

    fx = stream.uniform_range(2.0, 5.0) * 2.0 * math.pi / width
    fy = stream.uniform_range(2.0, 5.0) * 2.0 * math.pi / height
    phase = stream.uniform_range(0.0, 2.0 * math.pi)
    noise = stream.gaussians(width * height).reshape(height, width)
    density = 0.45 + 0.12 * np.sin(fx * xs + phase) * np.cos(fy * ys) + 0.5 * ndimage.gaussian_filter(noise, 2.0)
    darkness = np.where(bits, np.clip(density, 0.05, 0.95), 0.0)
    speckles = _speckles(stream, bits, darkness)
    darkness = ndimage.gaussian_filter(darkness, 0.7)

    rgb = 255.0 * (1.0 - darkness[:, :, None] * ABSORPTION)
    _log.debug("Case %s: tissue covers %.1f%% with %d speckles", spec.pair_id, 100 * coverage, speckles)
    return Image(quantize_u8(rgb), spec.mpp), Mask(bits)


def simulate_stain(
    image: Image,
    seed: int,
    gamma: float | None = None,
    tint: tuple[float, float, float] | None = None,
    noise_sigma: float = NOISE_SIGMA,
) -> Image:
    """
    Re-stains an image: out = 1 - (1 - x^gamma) * tint plus Gaussian noise, on
    unit intensities per channel (gray images use the mean tint).

    The remap is monotone in every channel, so structure survives. Gamma and
    tint are drawn from the seed unless given; the draws happen either way so
    overriding one does not shift the noise.
    """
    stream = prng_stream(seed, STAIN_STREAM)
    drawn_gamma = stream.uniform_range(*GAMMA_RANGE)
    drawn_tint = STAIN_TINTS[stream.integer(len(STAIN_TINTS))]
    gamma = drawn_gamma if gamma is None else gamma
    weights = np.array(drawn_tint if tint is None else tint, dtype=np.float64)
    if image.is_gray:
        weights = np.array(weights.mean())

    x = image.unit()
    out = 1.0 - (1.0 - x**gamma) * weights
    if noise_sigma > 0:
        out = out + noise_sigma * stream.gaussians(out.size).reshape(out.shape)
    _log.debug("Restained with gamma %.3f and tint %s", gamma, weights.tolist())
    if image.data.dtype == np.uint8:
        return image.replace(quantize_u8(out * 255.0))
    return image.replace(np.clip(out, 0.0, 1.0))
